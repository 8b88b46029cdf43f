#include "eslr/params.hpp"

#include <algorithm>
#include <cmath>

#include "eslr/error.hpp"

namespace eslr {

void ModelParams::add(std::string name, Tensor value) {
    if (index_.contains(name)) throw ValidationError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(value)});
}

bool ModelParams::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ModelParams::index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ValidationError("unknown parameter '" + std::string(name) + "'");
    return it->second;
}

const Tensor& ModelParams::get(std::string_view name) const { return entries_[index_of(name)].value; }

Tensor& ModelParams::mutable_value(std::string_view name) { return entries_[index_of(name)].value; }

void ModelParams::set(std::string_view name, Tensor value) {
    Tensor& dst = mutable_value(name);
    if (dst.shape() != value.shape()) {
        throw ShapeError("parameter '" + std::string(name) + "' has shape " + shape_str(dst.shape()) +
                         ", got " + shape_str(value.shape()));
    }
    dst = std::move(value);
}

std::size_t ModelParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
        if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) return false;
    }
    return true;
}

BoundParams::BoundParams(Tape& tape, const ModelParams& params) : tape_(&tape), params_(&params) {
    for (const auto& e : params.entries()) vars_.emplace(e.name, tape.leaf(e.value));
}

Var BoundParams::operator[](std::string_view name) const {
    auto it = vars_.find(std::string(name));
    if (it == vars_.end()) throw ValidationError("unknown parameter '" + std::string(name) + "'");
    return it->second;
}

Gradients BoundParams::gradients() const {
    Gradients out;
    for (const auto& e : params_->entries()) out.emplace(e.name, tape_->grad(vars_.at(e.name)));
    return out;
}

void add_mlp(ModelParams& params, const std::string& prefix, const MlpShape& shape, Rng& rng) {
    std::vector<std::size_t> widths{shape.in};
    for (std::size_t i = 0; i < shape.hidden_layers; ++i) widths.push_back(shape.hidden);
    widths.push_back(shape.out);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
        const bool last = l + 2 == widths.size();
        const double bound = std::sqrt((last ? 3.0 : 6.0) / static_cast<double>(fan_in));
        Tensor w = Tensor::matrix(fan_in, fan_out);
        for (auto& x : w.data()) x = rng.uniform(-bound, bound);
        const std::string base = prefix + ".l" + std::to_string(l);
        params.add(base + ".weight", std::move(w));
        params.add(base + ".bias", Tensor(Shape{fan_out}));
    }
    if (shape.layer_norm) {
        params.add(prefix + ".norm.gamma", Tensor(Shape{shape.out}, 1.0));
        params.add(prefix + ".norm.beta", Tensor(Shape{shape.out}));
    }
}

Var linear(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

Var mlp_apply(const BoundParams& p, const std::string& prefix, Var x) {
    std::size_t l = 0;
    if (!p.contains(prefix + ".l0.weight")) throw ValidationError("no MLP named '" + prefix + "'");
    while (true) {
        const std::string base = prefix + ".l" + std::to_string(l);
        const Var w = p[base + ".weight"];
        if (w.rows() != x.cols()) {
            throw ShapeError("mlp '" + prefix + "' layer " + std::to_string(l) + ": input width " +
                             std::to_string(x.cols()) + " does not match weight " + shape_str(w.shape()));
        }
        x = linear(x, w, p[base + ".bias"]);
        ++l;
        if (!p.contains(prefix + ".l" + std::to_string(l) + ".weight")) break;
        x = relu(x);
    }
    if (p.contains(prefix + ".norm.gamma")) x = layer_norm(x, p[prefix + ".norm.gamma"], p[prefix + ".norm.beta"]);
    return x;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, const AdamHyper& hyper) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    for (const auto& e : params.entries()) {
        Tensor& value = params.mutable_value(e.name);
        auto [mit, m_new] = state.m.try_emplace(e.name, Tensor(value.shape()));
        auto [vit, v_new] = state.v.try_emplace(e.name, Tensor(value.shape()));
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        auto git = grads.find(e.name);
        const Tensor* g = git != grads.end() ? &git->second : nullptr;
        if (g != nullptr && g->numel() != value.numel()) {
            throw ShapeError("adam: gradient for '" + e.name + "' has shape " + shape_str(g->shape()));
        }
        for (std::size_t i = 0; i < value.numel(); ++i) {
            const double gi = g != nullptr ? (*g)[i] : 0.0;
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            value[i] -= hyper.learning_rate * mhat / (std::sqrt(vhat) + hyper.eps);
        }
    }
}

GradCheckReport grad_check(const std::function<Var(const BoundParams&)>& f, ModelParams params,
                           const GradCheckOptions& opts) {
    Gradients analytic;
    {
        Tape tape;
        BoundParams bound(tape, params);
        Var loss = f(bound);
        tape.backward(loss);
        analytic = bound.gradients();
    }
    auto eval = [&](const ModelParams& p) {
        Tape tape;
        BoundParams bound(tape, p);
        return f(bound).value().item();
    };

    GradCheckReport report;
    Rng rng(opts.seed);
    for (const auto& entry : std::vector<ModelParams::Entry>(params.entries())) {
        const std::size_t n = entry.value.numel();
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        if (opts.sample_fraction < 1.0) {
            std::size_t keep = std::max<std::size_t>(1, static_cast<std::size_t>(opts.sample_fraction * n));
            // partial Fisher-Yates
            for (std::size_t i = 0; i < keep; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
            idx.resize(keep);
            std::sort(idx.begin(), idx.end());
        }
        double worst = 0.0;
        for (auto i : idx) {
            if (opts.exclude && opts.exclude(entry.name, i)) {
                ++report.skipped;
                continue;
            }
            const double orig = entry.value[i];
            params.mutable_value(entry.name)[i] = orig + opts.h;
            const double fp = eval(params);
            params.mutable_value(entry.name)[i] = orig - opts.h;
            const double fm = eval(params);
            params.mutable_value(entry.name)[i] = orig;
            const double numeric = (fp - fm) / (2.0 * opts.h);
            const double a = analytic.at(entry.name)[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
            const double rel = std::abs(a - numeric) / denom;
            ++report.checked;
            worst = std::max(worst, rel);
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = entry.name;
                report.worst_index = i;
            }
        }
        report.per_param[entry.name] = worst;
    }
    return report;
}

}  // namespace eslr
