#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "eslr/rng.hpp"
#include "eslr/tensor.hpp"

namespace eslr {

/// Named parameter tensors in insertion order. Names are unique and shapes
/// are fixed once added.
class ModelParams {
   public:
    struct Entry {
        std::string name;
        Tensor value;
    };

    void add(std::string name, Tensor value);
    bool contains(std::string_view name) const;
    const Tensor& get(std::string_view name) const;
    /// Replace values in place; throws ShapeError if the shape changes.
    void set(std::string_view name, Tensor value);
    Tensor& mutable_value(std::string_view name);

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t scalar_count() const;

    friend bool operator==(const ModelParams& a, const ModelParams& b);

   private:
    std::size_t index_of(std::string_view name) const;

    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

using Gradients = std::map<std::string, Tensor>;

/// Every parameter placed on a tape as a gradient-tracked leaf.
class BoundParams {
   public:
    BoundParams(Tape& tape, const ModelParams& params);

    Var operator[](std::string_view name) const;
    bool contains(std::string_view name) const { return params_->contains(name); }
    Tape& tape() const { return *tape_; }

    /// Gradients after `tape.backward`; unreachable parameters get zeros.
    Gradients gradients() const;

   private:
    Tape* tape_;
    const ModelParams* params_;
    std::unordered_map<std::string, Var> vars_;
};

struct MlpShape {
    std::size_t in = 0;
    std::size_t hidden = 0;
    std::size_t out = 0;
    std::size_t hidden_layers = 2;
    bool layer_norm = true;
};

/// Adds `<prefix>.l{i}.weight` (fan_in x fan_out) and `.l{i}.bias` for each
/// linear layer plus `<prefix>.norm.gamma/.beta` when requested. Weights are
/// uniform with He bound sqrt(6/fan_in) on hidden layers and sqrt(3/fan_in)
/// on the output layer; biases start at zero.
void add_mlp(ModelParams& params, const std::string& prefix, const MlpShape& shape, Rng& rng);

/// Linear -> ReLU -> ... -> Linear, then LayerNorm if `<prefix>.norm.gamma`
/// exists. Layers are discovered by name, so a single `l0` is a plain
/// linear map.
Var mlp_apply(const BoundParams& p, const std::string& prefix, Var x);

/// Linear layer on its own: x * W + b.
Var linear(Var x, Var weight, Var bias);

struct AdamHyper {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::uint64_t step = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

/// Bias-corrected Adam. Parameters without an entry in `grads` are treated
/// as having zero gradient.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, const AdamHyper& hyper);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    std::map<std::string, double> per_param;
};

struct GradCheckOptions {
    double h = 1e-5;
    /// Fraction of scalars per parameter to probe (at least one each).
    double sample_fraction = 1.0;
    std::uint64_t seed = 0;
    /// Relative error uses max(|a|, |n|, floor) as the denominator.
    double floor = 1e-8;
    /// Entries whose perturbation would cross a non-smooth point of the
    /// function are skipped; the callback returns true for such points.
    std::function<bool(const std::string&, std::size_t)> exclude;
};

/// Compares reverse-mode gradients of `f` against central differences.
/// `f` builds its loss on the given tape from the bound parameters.
GradCheckReport grad_check(const std::function<Var(const BoundParams&)>& f, ModelParams params,
                           const GradCheckOptions& opts);

}  // namespace eslr
