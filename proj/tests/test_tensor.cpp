#include <doctest.h>

#include <cmath>
#include <functional>

#include "eslr/error.hpp"
#include "eslr/params.hpp"
#include "eslr/tensor.hpp"
#include "helpers.hpp"

using namespace eslr;

namespace {

using Op = std::function<Var(const std::vector<Var>&)>;

// Contracts op(inputs) with fixed random weights and compares reverse-mode
// gradients against central differences for every input scalar.
double worst_fd_error(const Op& op, std::vector<Tensor> inputs, std::uint64_t seed = 1, double h = 1e-6) {
    Rng rng(seed);
    Tensor weights;
    auto eval = [&](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& x : xs) vars.push_back(tape.leaf(x));
        Var out = op(vars);
        if (weights.numel() != out.value().numel()) {
            weights = Tensor(out.shape());
            for (auto& w : weights.data()) w = rng.uniform(-1, 1);
        }
        Var loss = sum(mul(out, tape.constant(weights)));
        if (grads) {
            tape.backward(loss);
            for (const auto& v : vars) grads->push_back(tape.grad(v));
        }
        return loss.value().item();
    };
    std::vector<Tensor> grads;
    eval(inputs, &grads);
    double worst = 0.0;
    for (std::size_t a = 0; a < inputs.size(); ++a) {
        for (std::size_t i = 0; i < inputs[a].numel(); ++i) {
            const double x0 = inputs[a][i];
            inputs[a][i] = x0 + h;
            const double fp = eval(inputs, nullptr);
            inputs[a][i] = x0 - h;
            const double fm = eval(inputs, nullptr);
            inputs[a][i] = x0;
            const double fd = (fp - fm) / (2 * h);
            const double an = grads[a][i];
            worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
        }
    }
    return worst;
}

Tensor rnd(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1, double hi = 1) {
    Rng rng(seed);
    return test::random_tensor(r, c, rng, lo, hi);
}

// Values bounded away from 0 so relu/elu/huber kinks are not crossed by h.
Tensor away_from_zero(std::size_t r, std::size_t c, std::uint64_t seed) {
    Tensor t = rnd(r, c, seed);
    for (auto& x : t.data()) x = x < 0 ? x - 0.1 : x + 0.1;
    return t;
}

}  // namespace

TEST_CASE("segment_sum example and empty segments") {
    Tape tape;
    Var v = tape.leaf(Tensor::from_rows({{1}, {2}, {3}}));
    Var s = segment_sum(v, {0, 0, 1}, 2);
    CHECK(s.value() == Tensor::from_rows({{3}, {3}}));
    Var m = segment_mean(v, {0, 0, 2}, 3);
    CHECK(m.value() == Tensor::from_rows({{1.5}, {0}, {3}}));
    CHECK_THROWS_AS(segment_sum(v, {0, 5, 1}, 2), ShapeError);
}

TEST_CASE("matmul and shape errors") {
    Tape tape;
    Var a = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
    Var b = tape.constant(Tensor::from_rows({{5}, {6}}));
    CHECK(matmul(a, b).value() == Tensor::from_rows({{17}, {39}}));
    CHECK_THROWS_AS(matmul(b, b), ShapeError);
    CHECK_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("relu derivative at zero is zero") {
    Tape tape;
    Var x = tape.leaf(Tensor::from_rows({{0.0, 1.0, -1.0}}));
    tape.backward(sum(relu(x)));
    CHECK(tape.grad(x) == Tensor::from_rows({{0.0, 1.0, 0.0}}));
}

TEST_CASE("unreached leaves get zero gradients; backward is repeatable") {
    Tape tape;
    Var x = tape.leaf(Tensor::from_rows({{2.0}}));
    Var y = tape.leaf(Tensor::from_rows({{3.0}}));
    Var loss = sum(square(x));
    tape.backward(loss);
    CHECK(tape.grad(x)[0] == 4.0);
    CHECK(tape.grad(y)[0] == 0.0);
    tape.backward(loss);
    CHECK(tape.grad(x)[0] == 4.0);
}

TEST_CASE("backward requires a scalar") {
    Tape tape;
    Var x = tape.leaf(Tensor::from_rows({{1.0, 2.0}}));
    CHECK_THROWS(tape.backward(x));
}

TEST_CASE("primitive gradients match central differences") {
    const double tol = 1e-6;
    SUBCASE("elementwise binary") {
        const std::vector<Tensor> ab = {rnd(4, 3, 1), away_from_zero(4, 3, 2)};
        CHECK(worst_fd_error([](auto& v) { return add(v[0], v[1]); }, ab) <= tol);
        CHECK(worst_fd_error([](auto& v) { return sub(v[0], v[1]); }, ab) <= tol);
        CHECK(worst_fd_error([](auto& v) { return mul(v[0], v[1]); }, ab) <= tol);
        CHECK(worst_fd_error([](auto& v) { return div(v[0], v[1]); }, ab) <= tol);
        CHECK(worst_fd_error([](auto& v) { return atan2(v[0], v[1]); }, ab) <= tol);
    }
    SUBCASE("elementwise unary") {
        const std::vector<Tensor> a = {away_from_zero(5, 2, 3)};
        CHECK(worst_fd_error([](auto& v) { return neg(v[0]); }, a) <= tol);
        CHECK(worst_fd_error([](auto& v) { return scale(v[0], -2.5); }, a) <= tol);
        CHECK(worst_fd_error([](auto& v) { return add_scalar(v[0], 0.7); }, a) <= tol);
        CHECK(worst_fd_error([](auto& v) { return relu(v[0]); }, a) <= tol);
        CHECK(worst_fd_error([](auto& v) { return elu(v[0]); }, a) <= tol);
        CHECK(worst_fd_error([](auto& v) { return elu_plus_one(v[0]); }, a) <= tol);
        CHECK(worst_fd_error([](auto& v) { return square(v[0]); }, a) <= tol);
        CHECK(worst_fd_error([](auto& v) { return cube(v[0]); }, a) <= tol);
        CHECK(worst_fd_error([](auto& v) { return sqrt(v[0]); }, {rnd(3, 3, 4, 0.2, 2.0)}) <= tol);
    }
    SUBCASE("huber on both sides of the kink") {
        Tensor tiny = rnd(3, 4, 5, 1e-13, 9e-13);  // quadratic side of delta = 1e-6
        CHECK(worst_fd_error([](auto& v) { return huber_from_squared(v[0], 1e-6); }, {tiny}, 1, 1e-15) <= 1e-5);
        CHECK(worst_fd_error([](auto& v) { return huber_from_squared(v[0], 0.5); }, {rnd(2, 2, 6, 0.01, 0.2)}) <=
              tol);
        CHECK(worst_fd_error([](auto& v) { return huber_from_squared(v[0], 0.5); }, {rnd(2, 2, 6, 1.0, 3.0)}) <=
              tol);
    }
    SUBCASE("broadcasting and reductions") {
        CHECK(worst_fd_error([](auto& v) { return add_row(v[0], v[1]); }, {rnd(4, 3, 7), rnd(1, 3, 8)}) <= tol);
        CHECK(worst_fd_error([](auto& v) { return mul_col(v[0], v[1]); }, {rnd(4, 3, 9), rnd(4, 1, 10)}) <= tol);
        CHECK(worst_fd_error([](auto& v) { return div_col(v[0], v[1]); },
                             {rnd(4, 3, 11), rnd(4, 1, 12, 0.5, 2.0)}) <= tol);
        CHECK(worst_fd_error([](auto& v) { return mul_scalar_var(v[0], v[1]); },
                             {rnd(3, 3, 13), Tensor::scalar(0.7)}) <= tol);
        CHECK(worst_fd_error([](auto& v) { return sum_cols(v[0]); }, {rnd(4, 3, 14)}) <= tol);
        CHECK(worst_fd_error([](auto& v) { return sum_rows(v[0]); }, {rnd(4, 3, 15)}) <= tol);
        CHECK(worst_fd_error([](auto& v) { return mean(v[0]); }, {rnd(4, 3, 16)}) <= tol);
    }
    SUBCASE("linear algebra and layout") {
        CHECK(worst_fd_error([](auto& v) { return matmul(v[0], v[1]); }, {rnd(5, 4, 17), rnd(4, 3, 18)}) <= tol);
        CHECK(worst_fd_error([](auto& v) { return transpose(v[0]); }, {rnd(5, 4, 19)}) <= tol);
        CHECK(worst_fd_error([](auto& v) { return concat_cols({v[0], v[1]}); }, {rnd(3, 2, 20), rnd(3, 4, 21)}) <=
              tol);
        CHECK(worst_fd_error([](auto& v) { return slice_cols(v[0], 1, 3); }, {rnd(3, 4, 22)}) <= tol);
        CHECK(worst_fd_error([](auto& v) { return slice_rows(v[0], 1, 3); }, {rnd(4, 2, 23)}) <= tol);
        CHECK(worst_fd_error([](auto& v) { return gather_rows(v[0], {2, 0, 2, 1}); }, {rnd(3, 2, 24)}) <= tol);
        CHECK(worst_fd_error([](auto& v) { return segment_sum(v[0], {1, 0, 1, 3}, 4); }, {rnd(4, 2, 25)}) <= tol);
        CHECK(worst_fd_error([](auto& v) { return segment_mean(v[0], {1, 0, 1, 3}, 4); }, {rnd(4, 2, 26)}) <=
              tol);
        CHECK(worst_fd_error([](auto& v) { return cross_rows(v[0], v[1]); }, {rnd(4, 3, 27), rnd(4, 3, 28)}) <=
              tol);
        CHECK(worst_fd_error([](auto& v) { return dot_rows(v[0], v[1]); }, {rnd(4, 3, 29), rnd(4, 3, 30)}) <= tol);
    }
    SUBCASE("layer norm") {
        CHECK(worst_fd_error([](auto& v) { return layer_norm(v[0], v[1], v[2]); },
                             {rnd(4, 6, 31), rnd(1, 6, 32), rnd(1, 6, 33)}) <= tol);
    }
}

TEST_CASE("layer norm output has zero mean and unit variance per row") {
    Tape tape;
    Var x = tape.constant(rnd(3, 8, 40, -5, 5));
    Var y = layer_norm(x, tape.constant(Tensor(Shape{8}, 1.0)), tape.constant(Tensor(Shape{8})));
    for (std::size_t r = 0; r < 3; ++r) {
        double m = 0.0, v = 0.0;
        for (std::size_t c = 0; c < 8; ++c) m += y.value()(r, c);
        m /= 8;
        for (std::size_t c = 0; c < 8; ++c) v += std::pow(y.value()(r, c) - m, 2);
        CHECK(std::abs(m) <= 1e-12);
        CHECK(v / 8 == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("model parameters: registry semantics") {
    ModelParams p;
    p.add("a", Tensor::matrix(2, 3, 1.0));
    CHECK(p.contains("a"));
    CHECK_FALSE(p.contains("b"));
    CHECK_THROWS(p.add("a", Tensor::matrix(1, 1)));
    CHECK_THROWS_AS(p.set("a", Tensor::matrix(3, 2)), ShapeError);
    p.set("a", Tensor::matrix(2, 3, 2.0));
    CHECK(p.get("a")[0] == 2.0);
    CHECK(p.scalar_count() == 6);
}

TEST_CASE("MLP gradients pass the grad_check utility") {
    Rng rng(7);
    ModelParams p;
    add_mlp(p, "m", {5, 8, 3, 2, true}, rng);
    const Tensor x = rnd(6, 5, 50);
    GradCheckOptions opts;
    opts.h = 1e-6;
    opts.floor = 1e-6;
    opts.exclude = [](const std::string&, std::size_t) { return false; };
    const auto report = grad_check(
        [&](const BoundParams& b) {
            Var y = mlp_apply(b, "m", b.tape().constant(x));
            return sum(mul(y, y));
        },
        p, opts);
    CHECK(report.checked == p.scalar_count());
    INFO(report.worst_param, "[", report.worst_index, "]");
    // ReLU kinks make this the non-smooth tolerance
    CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("MLP input width mismatch is a ShapeError") {
    Rng rng(1);
    ModelParams p;
    add_mlp(p, "m", {4, 8, 2, 2, false}, rng);
    Tape tape;
    BoundParams b(tape, p);
    CHECK_THROWS_AS(mlp_apply(b, "m", tape.constant(Tensor::matrix(3, 5))), ShapeError);
}
