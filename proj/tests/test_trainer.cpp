#include <doctest.h>

#include <cmath>

#include "eslr/error.hpp"
#include "eslr/pipeline.hpp"
#include "helpers.hpp"

using namespace eslr;

namespace {

RunConfig tiny_config(std::size_t iterations) {
    RunConfig cfg = desk_config();
    cfg.model.hidden = 12;
    cfg.model.layers = 2;
    cfg.model.gsa_blocks = 1;
    cfg.mds.k = 3;
    cfg.model.embed_dim = 3;
    cfg.sim.warmup_frames = 2;
    cfg.train.iterations = iterations;
    cfg.train.scenes[0].garment = "grid:5";
    return cfg;
}

ModelParams train_tiny(const RunConfig& cfg, std::vector<double>* curve = nullptr) {
    const std::vector<GarmentAsset> assets{build_asset(cfg.train.scenes[0].garment, cfg)};
    return run_training(cfg, assets, "", [&](const IterationLog& l) {
        if (curve) curve->push_back(l.loss.total);
    });
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged and moments decay") {
    ModelParams p;
    p.add("w", Tensor::from_rows({{1.0, -2.0}}));
    const Tensor initial = p.get("w");
    AdamState st;
    const AdamHyper hyper{0.1, 0.9, 0.999, 1e-8};
    adam_step(p, {{"w", Tensor::matrix(1, 2)}}, st, hyper);
    CHECK(p.get("w") == initial);

    adam_step(p, {{"w", Tensor::matrix(1, 2, 0.5)}}, st, hyper);
    const double m1 = st.m["w"][0], v1 = st.v["w"][0];
    adam_step(p, {}, st, hyper);
    CHECK(st.m["w"][0] == doctest::Approx(0.9 * m1));
    CHECK(st.v["w"][0] == doctest::Approx(0.999 * v1));
}

TEST_CASE("adam: constant gradient steps approach the learning rate") {
    ModelParams p;
    p.add("w", Tensor::from_rows({{0.0, 0.0}}));
    AdamState st;
    const AdamHyper hyper{1e-3, 0.9, 0.999, 1e-8};
    const Gradients g{{"w", Tensor::from_rows({{3.0, -0.02}})}};
    double prev0 = 0.0, prev1 = 0.0;
    for (int i = 0; i < 1000; ++i) {
        prev0 = p.get("w")[0];
        prev1 = p.get("w")[1];
        adam_step(p, g, st, hyper);
    }
    CHECK(std::abs(p.get("w")[0] - prev0) == doctest::Approx(1e-3).epsilon(0.01));
    CHECK(std::abs(p.get("w")[1] - prev1) == doctest::Approx(1e-3).epsilon(0.01));
    CHECK(p.get("w")[0] < 0.0);
    CHECK(p.get("w")[1] > 0.0);
}

TEST_CASE("adam: scalar quadratic converges") {
    ModelParams p;
    p.add("x", Tensor::scalar(5.0));
    AdamState st;
    const AdamHyper hyper{0.05, 0.9, 0.999, 1e-8};
    int steps = 0;
    for (; steps < 5000; ++steps) {
        const double x = p.get("x").item();
        if (std::abs(x - 1.5) <= 1e-6 && steps > 100) break;
        adam_step(p, {{"x", Tensor::scalar(2.0 * (x - 1.5))}}, st, hyper);
    }
    CHECK(steps < 5000);
    CHECK(std::abs(p.get("x").item() - 1.5) <= 1e-6);
}

TEST_CASE("gradient clipping rescales by the global norm") {
    Gradients g{{"a", Tensor::from_rows({{3.0}})}, {"b", Tensor::from_rows({{4.0}})}};
    clip_gradients(g, 10.0);
    CHECK(g["a"][0] == 3.0);
    clip_gradients(g, 1.0);
    CHECK(g["a"][0] == doctest::Approx(0.6));
    CHECK(g["b"][0] == doctest::Approx(0.8));
}

TEST_CASE("scene sampling") {
    Rng rng(0);
    CHECK_THROWS_AS(sample_scene(0, 1.0, rng), ValidationError);
    for (int i = 0; i < 50; ++i) CHECK(sample_scene(1, 2.0, rng).scene == 0);

    std::vector<int> count(4, 0);
    Rng seeded(0);
    double max_t = 0.0, min_t = 1e9;
    for (int i = 0; i < 10000; ++i) {
        const SceneSample s = sample_scene(4, 2.0, seeded);
        ++count[s.scene];
        max_t = std::max(max_t, s.time_offset);
        min_t = std::min(min_t, s.time_offset);
    }
    for (int c : count) CHECK(std::abs(c / 10000.0 - 0.25) <= 0.03);
    CHECK(max_t <= 2.0);
    CHECK(min_t >= 0.0);

    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        const SceneSample x = sample_scene(3, 1.0, a), y = sample_scene(3, 1.0, b);
        CHECK(x.scene == y.scene);
        CHECK(x.time_offset == y.time_offset);
    }
}

TEST_CASE("learning rate zero keeps the initial parameters") {
    RunConfig cfg = tiny_config(5);
    cfg.train.adam.learning_rate = 0.0;
    const ModelParams trained = train_tiny(cfg);
    CHECK(trained == init_model(cfg.model, cfg.train.seed));
}

TEST_CASE("seeded training is reproducible") {
    const RunConfig cfg = tiny_config(25);
    std::vector<double> a, b;
    const ModelParams pa = train_tiny(cfg, &a);
    const ModelParams pb = train_tiny(cfg, &b);
    CHECK(a == b);
    CHECK(pa == pb);
    REQUIRE(a.size() == 25);

    RunConfig other = cfg;
    other.train.seed = 1;
    std::vector<double> c;
    train_tiny(other, &c);
    CHECK(c != a);
}

TEST_CASE("non-finite loss aborts with the iteration number") {
    const RunConfig cfg = tiny_config(3);
    const GarmentAsset asset = build_asset("grid:5", cfg);
    ModelParams p = init_model(cfg.model, 0);
    p.set("decoder.scale", Tensor(Shape{1}, std::nan("")));
    std::vector<TrainScene> scenes{{&asset, make_body({})}};
    try {
        train(scenes, cfg.model, p, cfg.train, cfg.physics, cfg.weights, cfg.sim);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(e.index() == 1);
        CHECK(std::string(e.what()).find("iteration 1") != std::string::npos);
    }
}

TEST_CASE("training validates its inputs") {
    const RunConfig cfg = tiny_config(3);
    const GarmentAsset asset = build_asset("grid:5", cfg);
    const ModelParams p = init_model(cfg.model, 0);
    std::vector<TrainScene> scenes{{&asset, make_body({})}};
    TrainConfig t = cfg.train;
    t.iterations = 0;
    CHECK_THROWS_AS(train(scenes, cfg.model, p, t, cfg.physics, cfg.weights, cfg.sim), ValidationError);
    CHECK_THROWS_AS(train({}, cfg.model, p, cfg.train, cfg.physics, cfg.weights, cfg.sim), ValidationError);
}

TEST_CASE("checkpoint callback fires at the interval and at the end") {
    RunConfig cfg = tiny_config(7);
    cfg.train.checkpoint_interval = 3;
    const GarmentAsset asset = build_asset("grid:5", cfg);
    std::vector<TrainScene> scenes{{&asset, make_body({})}};
    std::vector<std::size_t> seen, logged;
    TrainCallbacks cb;
    cb.on_iteration = [&](const IterationLog& l) { logged.push_back(l.iteration); };
    cb.on_checkpoint = [&](std::size_t it, const ModelParams&) { seen.push_back(it); };
    train(scenes, cfg.model, init_model(cfg.model, 0), cfg.train, cfg.physics, cfg.weights, cfg.sim, cb);
    CHECK(seen == std::vector<std::size_t>{3, 6, 7});
    CHECK(logged == std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("trailing mean") {
    const auto m = trailing_mean({1, 2, 3, 4, 5}, 2);
    CHECK(m == std::vector<double>{1, 1.5, 2.5, 3.5, 4.5});
    CHECK(trailing_mean({}, 3).empty());
}
