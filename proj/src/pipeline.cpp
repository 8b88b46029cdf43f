#include "eslr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "eslr/error.hpp"
#include "eslr/gsa.hpp"
#include "eslr/rng.hpp"

namespace eslr {

namespace fs = std::filesystem;

GeodesicEmbedding embed_mesh(const Mesh& mesh, const RunConfig& cfg, DistanceMatrix* distances) {
    const Topology topo = build_topology(mesh);
    const RestState rest = compute_rest_quantities(mesh, topo, cfg.physics.density);
    DistanceMatrix d = geodesic_distances(topo, rest);
    GeodesicEmbedding e = mds_embed(d, cfg.mds);
    if (distances != nullptr) *distances = std::move(d);
    return e;
}

GarmentAsset build_asset(const std::string& garment, const RunConfig& cfg) {
    Mesh mesh = load_garment(garment);
    const GeodesicEmbedding e = embed_mesh(mesh, cfg);
    return make_garment_asset(garment, std::move(mesh), e, "<in-memory>", cfg.physics.density,
                              cfg.sim.radius_factor, cfg.model.standardize_embedding);
}

GarmentAsset load_asset(const SceneSpec& scene, const RunConfig& cfg) {
    if (scene.embedding.empty()) {
        throw ValidationError("no embedding given for garment '" + scene.garment + "'; run `preprocess` first");
    }
    Mesh mesh = load_garment(scene.garment);
    GeoFile geo = read_geo_file(scene.embedding);
    return make_garment_asset(scene.garment, std::move(mesh), geo.embedding, scene.embedding, cfg.physics.density,
                              cfg.sim.radius_factor, cfg.model.standardize_embedding);
}

std::string log_record(const IterationLog& log) {
    const nlohmann::json j{{"iteration", log.iteration},     {"stretch", log.loss.stretch},
                           {"bending", log.loss.bending},     {"collision", log.loss.collision},
                           {"gravity", log.loss.gravity},     {"inertia", log.loss.inertia},
                           {"friction", log.loss.friction},   {"total", log.loss.total},
                           {"wall_time", log.wall_time}};
    return j.dump();
}

ModelParams run_training(const RunConfig& cfg, const std::vector<GarmentAsset>& assets, const std::string& out_dir,
                         const std::function<void(const IterationLog&)>& on_iteration) {
    validate(cfg);
    if (assets.size() != cfg.train.scenes.size()) {
        throw ValidationError("need one garment asset per training scene");
    }
    std::vector<TrainScene> scenes;
    for (std::size_t i = 0; i < assets.size(); ++i) {
        scenes.push_back(TrainScene{&assets[i], make_body(cfg.train.scenes[i].body)});
    }
    ModelParams init = init_model(cfg.model, cfg.train.seed);

    std::ofstream log_file;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        save_config((fs::path(out_dir) / "config.json").string(), cfg);
        log_file.open(fs::path(out_dir) / "train_log.jsonl");
        if (!log_file) throw std::runtime_error("cannot write train_log.jsonl in " + out_dir);
    }

    TrainCallbacks cb;
    cb.on_iteration = [&](const IterationLog& log) {
        if (log_file.is_open()) log_file << log_record(log) << "\n" << std::flush;
        if (on_iteration) on_iteration(log);
    };
    if (!out_dir.empty()) {
        cb.on_checkpoint = [&](std::size_t it, const ModelParams& params) {
            Checkpoint ck{cfg, it, cfg.train.seed, params};
            if (it == cfg.train.iterations) {
                write_checkpoint((fs::path(out_dir) / "final.ckpt").string(), ck);
            } else {
                char name[32];
                std::snprintf(name, sizeof(name), "ckpt_%06zu.ckpt", it);
                write_checkpoint((fs::path(out_dir) / name).string(), ck);
            }
        };
    }
    return train(scenes, cfg.model, std::move(init), cfg.train, cfg.physics, cfg.weights, cfg.sim, cb);
}

EvalRow evaluate_scene(const ModelParams& params, const RunConfig& cfg, const GarmentAsset& asset,
                       const BodyMotion& motion, std::size_t frames, const std::string& label) {
    const BodyModel body = make_body(motion);
    const SimState start = initial_state(asset, body, 0.0, cfg.sim, cfg.physics);
    const auto records = rollout(start, params, cfg.model, asset, body, frames, cfg.physics, cfg.weights);
    EvalRow row;
    row.scene = label;
    for (const FrameRecord& r : records) {
        row.loss.stretch += r.loss.stretch;
        row.loss.bending += r.loss.bending;
        row.loss.collision += r.loss.collision;
        row.loss.gravity += r.loss.gravity;
        row.loss.inertia += r.loss.inertia;
        row.loss.friction += r.loss.friction;
        row.max_penetration = std::max(row.max_penetration, r.max_penetration);
    }
    const double n = static_cast<double>(records.size());
    row.loss.stretch /= n;
    row.loss.bending /= n;
    row.loss.collision /= n;
    row.loss.gravity /= n;
    row.loss.inertia /= n;
    row.loss.friction /= n;
    row.loss.total = weighted_total(row.loss, cfg.weights);
    return row;
}

std::string format_report(const std::vector<EvalRow>& rows, const LossWeights& w) {
    std::ostringstream out;
    out << loss_formula_legend();
    char line[512];
    std::snprintf(line, sizeof(line),
                  "# weights: stretch %g bending %g inertia %g collision %g friction %g gravity %g\n", w.stretch,
                  w.bending, w.inertia, w.collision, w.friction, w.gravity);
    out << line;
    std::snprintf(line, sizeof(line), "%-32s %17s %17s %17s %17s %17s %17s %17s\n", "Scene", "Stretch", "Bending",
                  "Inertia", "Collision", "Friction", "Gravity", "Total");
    out << line;
    for (const EvalRow& r : rows) {
        std::snprintf(line, sizeof(line), "%-32s %17.10E %17.10E %17.10E %17.10E %17.10E %17.10E %17.10E\n",
                      r.scene.c_str(), r.loss.stretch, r.loss.bending, r.loss.inertia, r.loss.collision,
                      r.loss.friction, r.loss.gravity, r.loss.total);
        out << line;
    }
    return out.str();
}

std::vector<double> trailing_mean(const std::vector<double>& v, std::size_t window) {
    if (window == 0) throw ValidationError("window must be at least 1");
    std::vector<double> out(v.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        acc += v[i];
        if (i >= window) acc -= v[i - window];
        out[i] = acc / static_cast<double>(std::min(i + 1, window));
    }
    return out;
}

namespace {

template <typename F>
double median_seconds(std::size_t repeats, F&& run) {
    run();
    std::vector<double> t;
    for (std::size_t i = 0; i < repeats; ++i) {
        const auto start = std::chrono::steady_clock::now();
        run();
        t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
}

}  // namespace

BenchTiming bench_size(const ModelParams& params, const RunConfig& cfg, std::size_t vertices, std::size_t repeats) {
    if (vertices < 4) throw ValidationError("bench size must be at least 4 vertices");
    if (repeats == 0) throw ValidationError("bench repeats must be at least 1");
    check_model_params(params, cfg.model);

    // most square factorization; primes fall back to a nearly square grid
    std::size_t nx = static_cast<std::size_t>(std::sqrt(static_cast<double>(vertices)));
    while (nx > 2 && vertices % nx != 0) --nx;
    std::size_t nz = vertices / nx;
    if (nx * nz != vertices || nx < 2) {
        nx = static_cast<std::size_t>(std::sqrt(static_cast<double>(vertices)));
        nz = (vertices + nx - 1) / nx;
    }
    constexpr double spacing = 0.1;
    Mesh mesh = make_grid(nx, nz, spacing * static_cast<double>(nx - 1), spacing * static_cast<double>(nz - 1));

    GeodesicEmbedding emb;
    emb.n = mesh.vertices.size();
    emb.k = cfg.model.embed_dim;
    Rng rng(0);
    for (std::size_t i = 0; i < emb.n * emb.k; ++i) emb.coords.push_back(rng.uniform(-1.0, 1.0));
    const GarmentAsset asset = make_garment_asset("bench", std::move(mesh), emb, "<random>", cfg.physics.density,
                                                  cfg.sim.radius_factor, cfg.model.standardize_embedding);
    const BodyModel body = make_body(BodyMotion{});
    const SimState state = initial_state(asset, body, 0.0, cfg.sim, cfg.physics);

    GraphInputs inputs;
    Tensor encoded;
    {
        Tape tape;
        BoundParams bp(tape, params);
        const StepGraph g = forward_step(bp, cfg.model, asset, body, state);
        inputs = g.inputs;
        encoded = g.encoded_garment.value();
    }

    BenchTiming out;
    out.vertices = asset.mesh.vertices.size();
    out.lsdmp_seconds = median_seconds(repeats, [&] {
        Tape tape;
        BoundParams bp(tape, params);
        const LatentGraph lg = encode(inputs, bp);
        lsdmp_forward(lg, bp, cfg.model.layers, cfg.model.smoothing_steps);
    });
    out.gsa_seconds = median_seconds(repeats, [&] {
        Tape tape;
        BoundParams bp(tape, params);
        gsa_forward(tape.constant(encoded), tape.constant(asset.embedding), bp, cfg.model.gsa_blocks);
    });
    out.step_seconds = median_seconds(repeats, [&] { step(params, cfg.model, asset, body, state); });
    return out;
}

}  // namespace eslr
