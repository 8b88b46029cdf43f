#include <doctest.h>

#include <cmath>
#include <sstream>

#include "eslr/error.hpp"
#include "eslr/gsa.hpp"
#include "eslr/pipeline.hpp"
#include "helpers.hpp"

using namespace eslr;

namespace {

RunConfig small_config() {
    RunConfig cfg = desk_config();
    cfg.model.hidden = 16;
    cfg.model.layers = 2;
    cfg.model.gsa_blocks = 1;
    cfg.mds.k = 3;
    cfg.model.embed_dim = 3;
    return cfg;
}

// Random nonzero decoder so steps are not trivially free fall.
ModelParams random_params(const ModelConfig& model, std::uint64_t seed) {
    ModelParams p = init_model(model, seed);
    Rng rng(seed + 100);
    for (auto& x : p.mutable_value("decoder.l2.weight").data()) x = rng.uniform(-0.3, 0.3);
    return p;
}

}  // namespace

TEST_CASE("zero decoder without the gravity prior drifts freely") {
    RunConfig cfg = small_config();
    cfg.model.gravity_prior = false;
    const GarmentAsset asset = build_asset("grid:6", cfg);
    const BodyModel body = make_body({});
    const ModelParams p = init_model(cfg.model, 1);

    SimState s = initial_state(asset, body, 0.0, cfg.sim, cfg.physics);
    const SimState still = step(p, cfg.model, asset, body, s).next;
    CHECK(still.garment_pos == s.garment_pos);

    Rng rng(2);
    for (auto& v : s.garment_vel) v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const StepOutput out = step(p, cfg.model, asset, body, s);
    for (double a : out.accel.data()) CHECK(a == 0.0);
    for (std::size_t i = 0; i < s.garment_pos.size(); ++i) {
        CHECK(out.next.garment_pos[i] == s.garment_pos[i] + s.garment_vel[i] * s.dt);
        CHECK(out.next.garment_vel[i] == s.garment_vel[i]);
    }
}

TEST_CASE("gravity prior with a zero decoder is free fall") {
    RunConfig cfg = small_config();
    const GarmentAsset asset = build_asset("grid:5", cfg);
    const BodyModel body = make_body({});
    const StepOutput out = step(init_model(cfg.model, 3), cfg.model, asset, body,
                                initial_state(asset, body, 0.0, cfg.sim, cfg.physics));
    REQUIRE(out.accel.rows() == asset.mesh.vertex_count());  // garment rows only
    CHECK(out.accel.cols() == 3);
    for (std::size_t i = 0; i < out.accel.rows(); ++i) {
        CHECK(out.accel(i, 0) == 0.0);
        CHECK(out.accel(i, 1) == -cfg.model.accel_unit);
        CHECK(out.accel(i, 2) == 0.0);
    }
}

TEST_CASE("step equals a straight recomposition of its stages") {
    RunConfig cfg = small_config();
    const GarmentAsset asset = build_asset("grid:6", cfg);
    const BodyModel body = make_body({});
    const ModelParams p = random_params(cfg.model, 4);
    SimState s = initial_state(asset, body, 0.0, cfg.sim, cfg.physics);
    // bring the cloth into contact range
    for (auto& x : s.garment_pos) x.y -= 0.04;

    const StepOutput out = step(p, cfg.model, asset, body, s);

    Tape tape;
    BoundParams b(tape, p);
    const WorldEdgeSet w = build_world_edges(s.garment_pos, s.body_pos, asset.world_radius);
    REQUIRE(!w.pairs.empty());
    const Positions body_n = vertex_normals(s.body_pos, body.rest.triangles);
    GraphFrame f;
    f.garment_pos = &s.garment_pos;
    f.garment_vel = &s.garment_vel;
    f.garment_rest = &asset.mesh.vertices;
    f.garment_triangles = &asset.mesh.triangles;
    f.garment_topology = &asset.topology;
    f.body_pos = &s.body_pos;
    f.body_vel = &s.body_vel;
    f.body_normals = &body_n;
    f.world_edges = &w;
    f.length_unit = asset.length_unit;
    f.velocity_unit = asset.length_unit / s.dt;
    const LatentGraph enc = encode(build_graph_inputs(f), b);
    const std::size_t ng = asset.mesh.vertex_count();
    Var v_enc = slice_rows(enc.vertex, 0, ng);
    Var v_lsdmp = slice_rows(lsdmp_forward(enc, b, cfg.model.layers, cfg.model.smoothing_steps).vertex, 0, ng);
    Var v_gsa = gsa_forward(v_enc, tape.constant(asset.embedding), b, cfg.model.gsa_blocks);
    Var fused = mlp_apply(b, "fusion", concat_cols({v_lsdmp, v_gsa}));
    const Tensor dec = mlp_apply(b, "decoder", fused).value();
    const double scale = p.get("decoder.scale")[0];

    double worst = 0.0;
    for (std::size_t i = 0; i < ng; ++i) {
        const Vec3 a{dec(i, 0) * scale, (dec(i, 1) * scale - 1.0), dec(i, 2) * scale};
        const Vec3 acc = a * cfg.model.accel_unit;
        const Vec3 vel = s.garment_vel[i] + acc * s.dt;
        const Vec3 pos = s.garment_pos[i] + vel * s.dt;
        worst = std::max({worst, std::abs(out.accel(i, 0) - acc.x), std::abs(out.accel(i, 1) - acc.y),
                          std::abs(out.accel(i, 2) - acc.z), norm(out.next.garment_pos[i] - pos)});
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("steps are deterministic and a one-frame rollout equals a step") {
    RunConfig cfg = small_config();
    const GarmentAsset asset = build_asset("grid:5", cfg);
    const BodyModel body = make_body({BodyPreset::swinging_capsule, 0.4, 0.5, 1});
    const ModelParams p = random_params(cfg.model, 5);
    const SimState s = initial_state(asset, body, 0.3, cfg.sim, cfg.physics);
    const StepOutput a = step(p, cfg.model, asset, body, s, &cfg.physics, &cfg.weights);
    const StepOutput b = step(p, cfg.model, asset, body, s, &cfg.physics, &cfg.weights);
    CHECK(a.accel == b.accel);
    CHECK(a.next.garment_pos == b.next.garment_pos);

    SimState last;
    const auto records = rollout(s, p, cfg.model, asset, body, 1, cfg.physics, cfg.weights,
                                 [&](const SimState& st, const FrameRecord&) { last = st; });
    REQUIRE(records.size() == 1);
    CHECK(last.garment_pos == a.next.garment_pos);
    CHECK(records[0].loss.total == a.loss->total);
}

TEST_CASE("without a body in reach and without gravity the cloth moves uniformly") {
    RunConfig cfg = small_config();
    cfg.model.gravity_prior = false;
    cfg.sim.placement_height = 5.0;
    const GarmentAsset asset = build_asset("grid:4", cfg);
    const BodyModel body = make_body({});
    SimState s = initial_state(asset, body, 0.0, cfg.sim, cfg.physics);
    const Vec3 v{0.3, 0.1, -0.2};
    for (auto& q : s.garment_vel) q = v;
    const Positions start = s.garment_pos;
    SimState cur = s;
    const ModelParams p = init_model(cfg.model, 6);
    for (int k = 1; k <= 20; ++k) {
        cur = step(p, cfg.model, asset, body, cur).next;
        double worst = 0.0;
        for (std::size_t i = 0; i < start.size(); ++i) worst = std::max(worst, norm(cur.garment_pos[i] - (start[i] + v * (k * s.dt))));
        CHECK(worst <= 1e-12);
    }
}

TEST_CASE("placement") {
    const BodyModel body = make_body({});
    const Mesh cloth = make_grid(4, 4, 1.0, 1.0);
    const Placement pl = placement_for(cloth, body, 0.05);
    const Positions placed = pl.apply(cloth.vertices);
    double low = 1e9;
    for (const Vec3& x : placed) low = std::min(low, x.y);
    CHECK(low == doctest::Approx(body_apex(body) + 0.05).epsilon(1e-12));
    const Positions back = pl.inverse(placed);
    double worst = 0.0;
    for (std::size_t i = 0; i < back.size(); ++i) worst = std::max(worst, norm(back[i] - cloth.vertices[i]));
    CHECK(worst <= 1e-12);

    RunConfig cfg = small_config();
    cfg.sim.placement_height = -0.1;
    const GarmentAsset asset = build_asset("grid:6", cfg);
    std::ostringstream warn;
    initial_state(asset, body, 0.0, cfg.sim, cfg.physics, &warn);
    CHECK(warn.str().find("penetrates") != std::string::npos);
    std::ostringstream quiet;
    cfg.sim.placement_height = 0.05;
    initial_state(asset, body, 0.0, cfg.sim, cfg.physics, &quiet);
    CHECK(quiet.str().empty());
}

TEST_CASE("body motion presets") {
    SUBCASE("static sphere") {
        const BodyModel b = make_body({});
        CHECK(b.rest.vertex_count() == 162);
        const BodyFrame f0 = body_motion_eval(b, 0.0), f1 = body_motion_eval(b, 3.7);
        CHECK(f0.positions == f1.positions);
        for (const Vec3& v : f1.velocities) CHECK(norm(v) == 0.0);
    }
    SUBCASE("translating capsule") {
        const BodyModel b = make_body({BodyPreset::translating_capsule, 0.8, 0.5, 0});
        const BodyFrame f0 = body_motion_eval(b, 0.0), f = body_motion_eval(b, 1.25);
        for (std::size_t i = 0; i < f.positions.size(); ++i) {
            const Vec3 d = f.positions[i] - f0.positions[i];
            CHECK(norm(d) == doctest::Approx(0.8 * 1.25).epsilon(1e-12));
            CHECK(norm(f.velocities[i]) == doctest::Approx(0.8).epsilon(1e-12));
        }
    }
    SUBCASE("swinging capsule velocity is the derivative of position") {
        const BodyModel b = make_body({BodyPreset::swinging_capsule, 0.5, 0.7, 3});
        const double h = 1e-6;
        for (double t : {0.05, 0.41, 1.3}) {
            const BodyFrame f = body_motion_eval(b, t);
            const BodyFrame fp = body_motion_eval(b, t + h), fm = body_motion_eval(b, t - h);
            const double span = 2 * h;
            double worst = 0.0;
            for (std::size_t i = 0; i < f.positions.size(); ++i) {
                const Vec3 fd = (fp.positions[i] - fm.positions[i]) * (1.0 / span);
                worst = std::max(worst, norm(fd - f.velocities[i]));
            }
            CHECK(worst <= 1e-8);
        }
    }
    SUBCASE("zero-amplitude swing equals a capsule at rest") {
        const BodyModel swing = make_body({BodyPreset::swinging_capsule, 0.0, 0.5, 9});
        const BodyModel still = make_body({BodyPreset::translating_capsule, 0.0, 0.5, 0});
        for (double t : {0.0, 0.9}) {
            const BodyFrame a = body_motion_eval(swing, t), b = body_motion_eval(still, t);
            double worst = 0.0;
            for (std::size_t i = 0; i < a.positions.size(); ++i) worst = std::max(worst, norm(a.positions[i] - b.positions[i]));
            CHECK(worst <= 1e-15);
        }
    }
    CHECK_THROWS_AS(parse_body_preset("dancing_avatar"), ValidationError);
    CHECK(parse_body_preset(to_string(BodyPreset::swinging_capsule)) == BodyPreset::swinging_capsule);
}

TEST_CASE("non-finite state aborts the rollout with its frame") {
    RunConfig cfg = small_config();
    const GarmentAsset asset = build_asset("grid:4", cfg);
    const BodyModel body = make_body({});
    ModelParams p = random_params(cfg.model, 7);
    p.set("decoder.scale", Tensor(Shape{1}, std::nan("")));
    const SimState s = initial_state(asset, body, 0.0, cfg.sim, cfg.physics);
    try {
        rollout(s, p, cfg.model, asset, body, 5, cfg.physics, cfg.weights);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(e.index() == 1);
    }
}

TEST_CASE("embedding must match the garment") {
    RunConfig cfg = small_config();
    const Mesh m = make_grid(4, 4, 1.0, 1.0);
    const GeodesicEmbedding wrong = mds_embed(
        geodesic_distances(build_topology(make_grid(3, 3, 1.0, 1.0)),
                           compute_rest_quantities(make_grid(3, 3, 1.0, 1.0), build_topology(make_grid(3, 3, 1.0, 1.0)), 0.2)),
        cfg.mds);
    try {
        make_garment_asset("cloth.obj", m, wrong, "other.geo", 0.2, 1.5, false);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("preprocess") != std::string::npos);
    }
}
