#include "eslr/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cassert>
#include <memory>
#include <cmath>
#include <limits>
#include <sstream>

#include "eslr/error.hpp"

namespace eslr {

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
    out << ']';
    return out.str();
}

namespace {

std::size_t product(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a) {
    throw ShapeError(std::string(op) + ": unsupported shape " + shape_str(a));
}

void require_same(const char* op, Var a, Var b) {
    if (a.tape != b.tape) throw ShapeError(std::string(op) + ": operands live on different tapes");
    if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

void require_matrix(const char* op, Var a) {
    if (a.value().rank() > 2) shape_fail(op, a.shape());
}

template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.numel(); ++i) out[i] = f(av[i]);
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), {ia}, [ia, df](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(ia);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * df(x[i]);
    });
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != product(shape_)) {
        throw ShapeError("tensor: data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("from_rows: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape_) + " is not a scalar");
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
    return {this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
    return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    assert(value.all_finite() && "non-finite value produced by a tensor op");
    bool needs = false;
    for (auto i : inputs) needs = needs || nodes_[i].requires_grad;
    Node node{std::move(value), {}, {}, {}, needs};
    if (needs) {
        node.inputs = std::move(inputs);
        node.backward = std::move(backward);
    }
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.numel() != n.value.numel() || n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw ShapeError("backward: loss is not on this tape");
    if (nodes_[loss.id].value.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(nodes_[loss.id].value.shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor();
    grad_buffer(loss.id)[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.backward || n.grad.numel() == 0) continue;
        n.backward(*this, n.grad);
    }
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.numel() == n.value.numel() && n.grad.shape() == n.value.shape()) return n.grad;
    return Tensor(n.value.shape());
}

// ---- elementwise binary ----------------------------------------------------

Var add(Var a, Var b) {
    require_same("add", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
        if (t.requires_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
        }
    });
}

Var sub(Var a, Var b) {
    require_same("sub", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
        if (t.requires_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b) {
    require_same("mul", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        if (t.requires_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var div(Var a, Var b) {
    require_same("div", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= bv[i];
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        if (t.requires_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] / bv[i];
        }
        if (t.requires_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double) { return s; });
}

Var add_scalar(Var a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

// ---- broadcasts --------------------------------------------------------------

Var add_row(Var a, Var row) {
    require_matrix("add_row", a);
    const Tensor& av = a.value();
    const Tensor& rv = row.value();
    if (rv.numel() != av.cols() || rv.rank() > 2 || (rv.rank() == 2 && rv.rows() != 1)) {
        shape_fail("add_row", av.shape(), rv.shape());
    }
    Tensor out = av;
    const std::size_t r = av.rows(), c = av.cols();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += rv[j];
    }
    const std::size_t ia = a.id, ib = row.id;
    return a.tape->record(std::move(out), {ia, ib}, [ia, ib, r, c](Tape& t, const Tensor& g) {
        if (t.requires_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
            }
        }
    });
}

Var mul_col(Var a, Var col) {
    require_matrix("mul_col", a);
    const Tensor& av = a.value();
    const Tensor& cv = col.value();
    if (cv.numel() != av.rows() || cv.cols() != 1) shape_fail("mul_col", av.shape(), cv.shape());
    const std::size_t r = av.rows(), c = av.cols();
    Tensor out = av;
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= cv[i];
    }
    const std::size_t ia = a.id, ib = col.id;
    return a.tape->record(std::move(out), {ia, ib}, [ia, ib, r, c](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        const Tensor& cv = t.value(ib);
        if (t.requires_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i * c + j] * cv[i];
            }
        }
        if (t.requires_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < r; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * av[i * c + j];
                gb[i] += s;
            }
        }
    });
}

Var div_col(Var a, Var col) {
    require_matrix("div_col", a);
    const Tensor& av = a.value();
    const Tensor& cv = col.value();
    if (cv.numel() != av.rows() || cv.cols() != 1) shape_fail("div_col", av.shape(), cv.shape());
    const std::size_t r = av.rows(), c = av.cols();
    Tensor out = av;
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= cv[i];
    }
    const std::size_t ia = a.id, ib = col.id;
    return a.tape->record(std::move(out), {ia, ib}, [ia, ib, r, c](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        const Tensor& cv = t.value(ib);
        if (t.requires_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i * c + j] / cv[i];
            }
        }
        if (t.requires_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < r; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * av[i * c + j];
                gb[i] -= s / (cv[i] * cv[i]);
            }
        }
    });
}

Var mul_scalar_var(Var a, Var s) {
    if (s.value().numel() != 1) shape_fail("mul_scalar_var", a.shape(), s.shape());
    const double sv = s.value()[0];
    Tensor out = a.value();
    for (auto& x : out.data()) x *= sv;
    const std::size_t ia = a.id, is = s.id;
    return a.tape->record(std::move(out), {ia, is}, [ia, is](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        const double sv = t.value(is)[0];
        if (t.requires_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * sv;
        }
        if (t.requires_grad(is)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * av[i];
            t.grad_buffer(is)[0] += acc;
        }
    });
}

// ---- linear algebra ------------------------------------------------------------

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// c (n x m) += a (n x k) * b (k x m)
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    const auto ni = static_cast<Eigen::Index>(n), ki = static_cast<Eigen::Index>(k),
               mi = static_cast<Eigen::Index>(m);
    MutMap(c, ni, mi).noalias() += ConstMap(a, ni, ki) * ConstMap(b, ki, mi);
}

// c (n x k) += g (n x m) * b^T where b is k x m
void gemm_nt(const double* g, const double* b, double* c, std::size_t n, std::size_t m, std::size_t k) {
    const auto ni = static_cast<Eigen::Index>(n), ki = static_cast<Eigen::Index>(k),
               mi = static_cast<Eigen::Index>(m);
    MutMap(c, ni, ki).noalias() += ConstMap(g, ni, mi) * ConstMap(b, ki, mi).transpose();
}

// c (k x m) += a^T * g where a is n x k, g is n x m
void gemm_tn(const double* a, const double* g, double* c, std::size_t n, std::size_t k, std::size_t m) {
    const auto ni = static_cast<Eigen::Index>(n), ki = static_cast<Eigen::Index>(k),
               mi = static_cast<Eigen::Index>(m);
    MutMap(c, ki, mi).noalias() += ConstMap(a, ni, ki).transpose() * ConstMap(g, ni, mi);
}

}  // namespace

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) shape_fail("matmul", av.shape(), bv.shape());
    const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
    Tensor out = Tensor::matrix(n, m);
    gemm_nn(av.data().data(), bv.data().data(), out.data().data(), n, k, m);
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [ia, ib, n, k, m](Tape& t, const Tensor& g) {
        if (t.requires_grad(ia)) {
            gemm_nt(g.data().data(), t.value(ib).data().data(), t.grad_buffer(ia).data().data(), n, m, k);
        }
        if (t.requires_grad(ib)) {
            gemm_tn(t.value(ia).data().data(), g.data().data(), t.grad_buffer(ib).data().data(), n, k, m);
        }
    });
}

Var transpose(Var a) {
    const Tensor& av = a.value();
    if (av.rank() != 2) shape_fail("transpose", av.shape());
    const std::size_t r = av.rows(), c = av.cols();
    Tensor out = Tensor::matrix(c, r);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), {ia}, [ia, r, c](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no operands");
    const std::size_t r = parts[0].rows();
    std::size_t total = 0;
    std::vector<std::size_t> widths, ids;
    for (const auto& p : parts) {
        require_matrix("concat_cols", p);
        if (p.rows() != r) shape_fail("concat_cols", parts[0].shape(), p.shape());
        if (p.tape != parts[0].tape) throw ShapeError("concat_cols: operands live on different tapes");
        widths.push_back(p.cols());
        ids.push_back(p.id);
        total += p.cols();
    }
    Tensor out = Tensor::matrix(r, total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& pv = parts[k].value();
        const std::size_t w = widths[k];
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < w; ++j) out[i * total + off + j] = pv[i * w + j];
        }
        off += w;
    }
    return parts[0].tape->record(std::move(out), ids, [ids, widths, r, total](Tape& t, const Tensor& g) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const std::size_t w = widths[k];
            if (t.requires_grad(ids[k])) {
                Tensor& gk = t.grad_buffer(ids[k]);
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < w; ++j) gk[i * w + j] += g[i * total + off + j];
                }
            }
            off += w;
        }
    });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    require_matrix("slice_cols", a);
    const Tensor& av = a.value();
    const std::size_t r = av.rows(), c = av.cols();
    if (begin > end || end > c) {
        throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside shape " + shape_str(av.shape()));
    }
    const std::size_t w = end - begin;
    Tensor out = Tensor::matrix(r, w);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = av[i * c + begin + j];
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), {ia}, [ia, r, c, w, begin](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < w; ++j) ga[i * c + begin + j] += g[i * w + j];
        }
    });
}

// ---- elementwise unary ---------------------------------------------------------

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var elu(Var a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
        [](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
}

Var elu_plus_one(Var a) {
    // exp(x) instead of expm1(x) + 1, which rounds to zero below about -37;
    // floored at the smallest normal so the value never underflows to zero
    return unary(
        a, [](double x) { return x > 0.0 ? x + 1.0 : std::max(std::exp(x), std::numeric_limits<double>::min()); },
        [](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
}

Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var cube(Var a) {
    return unary(a, [](double x) { return x * x * x; }, [](double x) { return 3.0 * x * x; });
}

Var sqrt(Var a) {
    return unary(
        a, [](double x) { return std::sqrt(x); }, [](double x) { return 0.5 / std::sqrt(x); });
}

Var huber_from_squared(Var s, double delta) {
    const double d2 = delta * delta;
    return unary(
        s, [delta, d2](double x) { return x < d2 ? x / (2.0 * delta) : std::sqrt(x) - 0.5 * delta; },
        [delta, d2](double x) { return x < d2 ? 1.0 / (2.0 * delta) : 0.5 / std::sqrt(x); });
}

Var atan2(Var y, Var x) {
    require_same("atan2", y, x);
    const Tensor& yv = y.value();
    const Tensor& xv = x.value();
    Tensor out(yv.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::atan2(yv[i], xv[i]);
    const std::size_t iy = y.id, ix = x.id;
    return y.tape->record(std::move(out), {iy, ix}, [iy, ix](Tape& t, const Tensor& g) {
        const Tensor& yv = t.value(iy);
        const Tensor& xv = t.value(ix);
        const bool gy = t.requires_grad(iy), gx = t.requires_grad(ix);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double r2 = xv[i] * xv[i] + yv[i] * yv[i];
            if (r2 == 0.0) continue;
            if (gy) t.grad_buffer(iy)[i] += g[i] * xv[i] / r2;
            if (gx) t.grad_buffer(ix)[i] -= g[i] * yv[i] / r2;
        }
    });
}

// ---- normalization -------------------------------------------------------------

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    require_matrix("layer_norm", x);
    const Tensor& xv = x.value();
    const std::size_t r = xv.rows(), c = xv.cols();
    if (gamma.value().numel() != c || beta.value().numel() != c) {
        shape_fail("layer_norm", xv.shape(), gamma.shape());
    }
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    Tensor out(xv.shape());
    // cache normalized values and inverse std for backward
    auto xhat = std::make_shared<std::vector<double>>(r * c);
    auto inv_std = std::make_shared<std::vector<double>>(r);
    for (std::size_t i = 0; i < r; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += xv[i * c + j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double d = xv[i * c + j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (std::size_t j = 0; j < c; ++j) {
            const double h = (xv[i * c + j] - mu) * is;
            (*xhat)[i * c + j] = h;
            out[i * c + j] = gv[j] * h + bv[j];
        }
    }
    const std::size_t ix = x.id, ig = gamma.id, ib = beta.id;
    return x.tape->record(std::move(out), {ix, ig, ib}, [ix, ig, ib, r, c, xhat, inv_std](Tape& t, const Tensor& g) {
        const Tensor& gv = t.value(ig);
        if (t.requires_grad(ig)) {
            Tensor& gg = t.grad_buffer(ig);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * (*xhat)[i * c + j];
            }
        }
        if (t.requires_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
            }
        }
        if (t.requires_grad(ix)) {
            Tensor& gx = t.grad_buffer(ix);
            const double inv_c = 1.0 / static_cast<double>(c);
            for (std::size_t i = 0; i < r; ++i) {
                double mean_dh = 0.0;
                double mean_dh_h = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    const double dh = g[i * c + j] * gv[j];
                    mean_dh += dh;
                    mean_dh_h += dh * (*xhat)[i * c + j];
                }
                mean_dh *= inv_c;
                mean_dh_h *= inv_c;
                const double is = (*inv_std)[i];
                for (std::size_t j = 0; j < c; ++j) {
                    const double dh = g[i * c + j] * gv[j];
                    gx[i * c + j] += is * (dh - mean_dh - (*xhat)[i * c + j] * mean_dh_h);
                }
            }
        }
    });
}

// ---- gather / scatter ------------------------------------------------------------

Var gather_rows(Var a, const std::vector<std::uint32_t>& index) {
    require_matrix("gather_rows", a);
    const Tensor& av = a.value();
    const std::size_t r = av.rows(), c = av.cols();
    Tensor out = Tensor::matrix(index.size(), c);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= r) {
            throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " out of range for shape " +
                             shape_str(av.shape()));
        }
        std::copy_n(av.data().data() + index[i] * c, c, out.data().data() + i * c);
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), {ia}, [ia, index, c](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < index.size(); ++i) {
            double* dst = ga.data().data() + index[i] * c;
            const double* src = g.data().data() + i * c;
            for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
        }
    });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    if (begin > end || end > a.rows()) {
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside shape " + shape_str(a.shape()));
    }
    std::vector<std::uint32_t> idx(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(begin + i);
    return gather_rows(a, idx);
}

Var segment_sum(Var values, const std::vector<std::uint32_t>& segment_ids, std::size_t n_segments) {
    require_matrix("segment_sum", values);
    const Tensor& vv = values.value();
    const std::size_t r = vv.rows(), c = vv.cols();
    if (segment_ids.size() != r) {
        throw ShapeError("segment_sum: " + std::to_string(segment_ids.size()) + " segment ids for shape " +
                         shape_str(vv.shape()));
    }
    Tensor out = Tensor::matrix(n_segments, c);
    for (std::size_t i = 0; i < r; ++i) {
        if (segment_ids[i] >= n_segments) {
            throw ShapeError("segment_sum: segment id " + std::to_string(segment_ids[i]) + " >= " +
                             std::to_string(n_segments));
        }
        double* dst = out.data().data() + segment_ids[i] * c;
        const double* src = vv.data().data() + i * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
    const std::size_t iv = values.id;
    return values.tape->record(std::move(out), {iv}, [iv, segment_ids, c](Tape& t, const Tensor& g) {
        Tensor& gv = t.grad_buffer(iv);
        for (std::size_t i = 0; i < segment_ids.size(); ++i) {
            double* dst = gv.data().data() + i * c;
            const double* src = g.data().data() + segment_ids[i] * c;
            for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
        }
    });
}

Var segment_mean(Var values, const std::vector<std::uint32_t>& segment_ids, std::size_t n_segments) {
    Var s = segment_sum(values, segment_ids, n_segments);
    Tensor inv_count = Tensor::matrix(n_segments, 1);
    for (auto id : segment_ids) inv_count[id] += 1.0;
    for (auto& x : inv_count.data()) x = x > 0.0 ? 1.0 / x : 0.0;
    return mul_col(s, values.tape->constant(std::move(inv_count)));
}

// ---- reductions ----------------------------------------------------------------

Var sum(Var a) {
    double s = 0.0;
    for (double x : a.value().data()) s += x;
    const std::size_t ia = a.id;
    return a.tape->record(Tensor::scalar(s), {ia}, [ia](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        const double gs = g[0];
        for (auto& x : ga.data()) x += gs;
    });
}

Var mean(Var a) {
    const auto n = static_cast<double>(a.value().numel());
    if (n == 0.0) throw ShapeError("mean: empty tensor");
    return scale(sum(a), 1.0 / n);
}

Var sum_cols(Var a) {
    require_matrix("sum_cols", a);
    const Tensor& av = a.value();
    const std::size_t r = av.rows(), c = av.cols();
    Tensor out = Tensor::matrix(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += av[i * c + j];
        out[i] = s;
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), {ia}, [ia, r, c](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i];
        }
    });
}

Var sum_rows(Var a) {
    require_matrix("sum_rows", a);
    const Tensor& av = a.value();
    const std::size_t r = av.rows(), c = av.cols();
    Tensor out = Tensor::matrix(1, c);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j] += av[i * c + j];
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), {ia}, [ia, r, c](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j];
        }
    });
}

Var cross_rows(Var a, Var b) {
    require_same("cross_rows", a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || av.cols() != 3) shape_fail("cross_rows", av.shape(), bv.shape());
    const std::size_t r = av.rows();
    Tensor out = Tensor::matrix(r, 3);
    for (std::size_t i = 0; i < r; ++i) {
        const double* x = av.data().data() + 3 * i;
        const double* y = bv.data().data() + 3 * i;
        out[3 * i + 0] = x[1] * y[2] - x[2] * y[1];
        out[3 * i + 1] = x[2] * y[0] - x[0] * y[2];
        out[3 * i + 2] = x[0] * y[1] - x[1] * y[0];
    }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [ia, ib, r](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        // d(a x b) = da x b + a x db; adjoints: ga = b x g, gb = g x a
        if (t.requires_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < r; ++i) {
                const double* y = bv.data().data() + 3 * i;
                const double* gi = g.data().data() + 3 * i;
                ga[3 * i + 0] += y[1] * gi[2] - y[2] * gi[1];
                ga[3 * i + 1] += y[2] * gi[0] - y[0] * gi[2];
                ga[3 * i + 2] += y[0] * gi[1] - y[1] * gi[0];
            }
        }
        if (t.requires_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < r; ++i) {
                const double* x = av.data().data() + 3 * i;
                const double* gi = g.data().data() + 3 * i;
                gb[3 * i + 0] += gi[1] * x[2] - gi[2] * x[1];
                gb[3 * i + 1] += gi[2] * x[0] - gi[0] * x[2];
                gb[3 * i + 2] += gi[0] * x[1] - gi[1] * x[0];
            }
        }
    });
}

Var dot_rows(Var a, Var b) { return sum_cols(mul(a, b)); }

}  // namespace eslr
