#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace eslr {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

/// Dense row-major f64 array. Rank 0 is a scalar, rank 1 a column of rows,
/// rank 2 a matrix; every op views its operands as rows() x cols().
class Tensor {
   public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor(Shape{rows, cols}, fill);
    }
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
    std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double item() const;

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

   private:
    Shape shape_;
    std::vector<double> data_;
};

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    /// Invalidated when more nodes are recorded on the tape.
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

/// Wengert list: nodes are appended in evaluation order, so reverse
/// insertion order is a valid reverse topological order.
class Tape {
   public:
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    Var constant(Tensor value);
    /// Gradient-tracked input.
    Var leaf(Tensor value);
    Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    /// Gradient accumulator for `id`, zero-initialized on first access.
    Tensor& grad_buffer(std::size_t id);

    /// Seeds d(loss)/d(loss) = 1 and sweeps backward. `loss` must be a scalar.
    void backward(Var loss);

    /// Zero tensor of the right shape when nothing reached `v`.
    Tensor grad(Var v) const;

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

   private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
};

// ---- primitives ------------------------------------------------------------
// Shape mismatches throw ShapeError naming the op and the operand shapes.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

/// a: r x c, row: 1 x c (or rank-1 of length c). Adds `row` to every row.
Var add_row(Var a, Var row);
/// a: r x c, col: r x 1. Multiplies row i by col[i].
Var mul_col(Var a, Var col);
/// a: r x c, col: r x 1. Divides row i by col[i].
Var div_col(Var a, Var col);
/// a: any shape, s: scalar. Multiplies every element by s.
Var mul_scalar_var(Var a, Var s);

Var matmul(Var a, Var b);
Var transpose(Var a);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);

/// Derivative at 0 is defined as 0.
Var relu(Var a);
Var elu(Var a);
/// elu(x) + 1 evaluated without cancellation; strictly positive.
Var elu_plus_one(Var a);
Var square(Var a);
Var cube(Var a);
Var sqrt(Var a);
Var atan2(Var y, Var x);
/// Elementwise on squared magnitudes s: s/(2*delta) if s < delta^2, else sqrt(s) - delta/2.
/// This is the Huber-smoothed magnitude evaluated from its square.
Var huber_from_squared(Var s, double delta);

/// Row-wise layer normalization; gamma and beta have c entries.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

Var gather_rows(Var a, const std::vector<std::uint32_t>& index);
/// Rows [begin, end).
Var slice_rows(Var a, std::size_t begin, std::size_t end);
/// Sums rows of `values` into `n_segments` rows by `segment_ids`, visiting
/// rows in ascending index order.
Var segment_sum(Var values, const std::vector<std::uint32_t>& segment_ids, std::size_t n_segments);
/// Mean per segment; empty segments yield zero rows.
Var segment_mean(Var values, const std::vector<std::uint32_t>& segment_ids, std::size_t n_segments);

/// Scalar (rank 0) total.
Var sum(Var a);
Var mean(Var a);
/// r x c -> r x 1.
Var sum_cols(Var a);
/// r x c -> 1 x c.
Var sum_rows(Var a);

/// Row-wise cross product of two n x 3 arrays.
Var cross_rows(Var a, Var b);
/// Row-wise dot product of two n x c arrays, giving n x 1.
Var dot_rows(Var a, Var b);

}  // namespace eslr
