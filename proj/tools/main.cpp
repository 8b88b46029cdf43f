// eslr: preprocess garments, train, simulate, evaluate and benchmark.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "eslr/checkpoint.hpp"
#include "eslr/error.hpp"
#include "eslr/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eslr;

namespace {

void echo(const char* command, const json& effective) {
    std::cout << "# " << command << " effective config\n" << effective.dump(2) << "\n" << std::flush;
}

void ensure_dir(const std::string& dir) {
    if (dir.empty()) throw ValidationError("--out must not be empty");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory `" + dir + "`: " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write `" + path.string() + "`");
    return out;
}

std::string geo_name(const std::string& garment) {
    std::string stem = garment.starts_with("grid:") ? garment : fs::path(garment).stem().string();
    for (char& c : stem) {
        if (c == ':' || c == '/' || c == '\\') c = '_';
    }
    return stem + ".geo";
}

// An embedding file when the scene names one, otherwise computed in memory.
GarmentAsset scene_asset(const SceneSpec& scene, const RunConfig& cfg) {
    if (!scene.embedding.empty()) return load_asset(scene, cfg);
    return build_asset(scene.garment, cfg);
}

json loss_json(const LossValues& v) {
    return {{"stretch", v.stretch}, {"bending", v.bending},   {"collision", v.collision}, {"gravity", v.gravity},
            {"inertia", v.inertia}, {"friction", v.friction}, {"total", v.total}};
}

struct PreprocessArgs {
    std::string garment, out, config;
    std::size_t embed_dim = 8;
    std::uint64_t seed = 0;
    bool keep_distances = false;
};

int run_preprocess(const PreprocessArgs& a, CLI::App& cmd) {
    RunConfig cfg = a.config.empty() ? RunConfig{} : load_config(a.config);
    if (a.config.empty() || cmd.count("--embed-dim")) cfg.mds.k = a.embed_dim;
    if (a.config.empty() || cmd.count("--seed")) cfg.mds.seed = a.seed;
    cfg.model.embed_dim = cfg.mds.k;
    validate(cfg);
    ensure_dir(a.out);
    const fs::path geo = fs::path(a.out) / geo_name(a.garment);
    echo("preprocess", {{"garment", a.garment},
                        {"out", geo.string()},
                        {"keep_distances", a.keep_distances},
                        {"geodesic", config_to_json(cfg)["geodesic"]}});

    const Mesh mesh = load_garment(a.garment);
    DistanceMatrix dist;
    const GeodesicEmbedding e = embed_mesh(mesh, cfg, &dist);
    write_geo_file(geo.string(), e, a.keep_distances ? &dist : nullptr);
    std::printf("vertices %zu\nembed_dim %zu\nstress %.10e\niterations %zu\nwrote %s\n", e.n, e.k, e.final_stress,
                e.iterations, geo.string().c_str());
    return 0;
}

struct TrainArgs {
    std::string config, out;
    std::size_t iters = 0;
    std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a, CLI::App& cmd) {
    RunConfig cfg = load_config(a.config);
    if (cmd.count("--iters")) cfg.train.iterations = a.iters;
    if (cmd.count("--seed")) cfg.train.seed = a.seed;
    validate(cfg);
    if (cfg.train.scenes.empty()) throw ValidationError("config has no train.scenes");
    ensure_dir(a.out);
    echo("train", config_to_json(cfg));

    std::vector<GarmentAsset> assets;
    for (const SceneSpec& s : cfg.train.scenes) assets.push_back(scene_asset(s, cfg));
    const std::size_t every = std::max<std::size_t>(1, cfg.train.iterations / 20);
    run_training(cfg, assets, a.out, [&](const IterationLog& log) {
        if (log.iteration % every == 0 || log.iteration == 1 || log.iteration == cfg.train.iterations) {
            std::fprintf(stderr, "iter %6zu  loss % .6e  (%.1f s)\n", log.iteration, log.loss.total, log.wall_time);
        }
    });
    std::printf("wrote %s\n", (fs::path(a.out) / "final.ckpt").string().c_str());
    return 0;
}

struct SimulateArgs {
    std::string ckpt, garment, embedding, body = "static_sphere", out;
    std::size_t frames = 30;
    double dt = 1.0 / 30.0;
    double amplitude = 0.0, frequency = 0.5;
};

int run_simulate(const SimulateArgs& a, CLI::App& cmd) {
    Checkpoint ck = read_checkpoint(a.ckpt);
    RunConfig cfg = ck.config;
    if (cmd.count("--dt")) cfg.sim.dt = a.dt;
    cfg.physics.dt = cfg.sim.dt;
    validate(cfg);
    if (a.frames == 0) throw ValidationError("--frames must be at least 1");
    check_model_params(ck.params, cfg.model);
    SceneSpec scene{a.garment, a.embedding, BodyMotion{parse_body_preset(a.body), a.amplitude, a.frequency, 0}};
    ensure_dir(a.out);
    json eff = config_to_json(cfg);
    eff["simulate"] = {{"ckpt", a.ckpt},         {"garment", a.garment},     {"embedding", a.embedding},
                       {"body", a.body},         {"amplitude", a.amplitude}, {"frequency", a.frequency},
                       {"frames", a.frames},     {"dt", cfg.sim.dt}};
    echo("simulate", eff);

    const GarmentAsset asset = scene_asset(scene, cfg);
    const BodyModel body = make_body(scene.body);
    const SimState start = initial_state(asset, body, 0.0, cfg.sim, cfg.physics, &std::cerr);
    std::ofstream metrics = open_out(fs::path(a.out) / "metrics.jsonl");
    double worst = 0.0;
    rollout(start, ck.params, cfg.model, asset, body, a.frames, cfg.physics, cfg.weights,
            [&](const SimState& s, const FrameRecord& r) {
                char name[32];
                std::snprintf(name, sizeof(name), "frame_%05zu.obj", r.frame);
                save_obj((fs::path(a.out) / name).string(), s.garment_pos, asset.mesh.triangles);
                json rec = loss_json(r.loss);
                rec["frame"] = r.frame;
                rec["max_penetration"] = r.max_penetration;
                metrics << rec.dump() << "\n";
                worst = std::max(worst, r.max_penetration);
            });
    std::printf("frames %zu\nmax_penetration %.6e\nwrote %s\n", a.frames, worst, a.out.c_str());
    return 0;
}

struct EvalArgs {
    std::string ckpt, scenes, report;
    std::size_t frames = 30;
};

std::vector<SceneSpec> read_scenes(const std::string& path, const RunConfig& base) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open scene list `" + path + "`");
    json list;
    try {
        list = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("scene list `" + path + "` is not valid JSON: " + e.what());
    }
    if (list.is_object() && list.contains("scenes")) list = list["scenes"];
    if (!list.is_array()) throw ValidationError("scene list must be a JSON array or {\"scenes\": [...]}");
    // reuse the config parser so scene entries get the same key checks
    json j = config_to_json(base);
    j["train"]["scenes"] = list;
    return config_from_json(j).train.scenes;
}

int run_eval(const EvalArgs& a) {
    const Checkpoint ck = read_checkpoint(a.ckpt);
    const RunConfig& cfg = ck.config;
    check_model_params(ck.params, cfg.model);
    if (a.frames == 0) throw ValidationError("--frames must be at least 1");
    const std::vector<SceneSpec> scenes = read_scenes(a.scenes, cfg);
    json eff = config_to_json(cfg);
    eff["eval"] = {{"ckpt", a.ckpt}, {"scenes", a.scenes}, {"report", a.report}, {"frames", a.frames}};
    echo("eval", eff);

    const fs::path report(a.report);
    if (report.has_parent_path()) ensure_dir(report.parent_path().string());
    std::vector<EvalRow> rows;
    for (const SceneSpec& s : scenes) {
        const GarmentAsset asset = scene_asset(s, cfg);
        rows.push_back(evaluate_scene(ck.params, cfg, asset, s.body, a.frames, s.garment + "/" + to_string(s.body.preset)));
    }
    const std::string text = format_report(rows, cfg.weights);
    open_out(report) << text;
    std::cout << text;
    return 0;
}

struct BenchArgs {
    std::vector<std::size_t> sizes;
    std::string ckpt, out;
    std::size_t repeats = 5;
};

int run_bench(const BenchArgs& a) {
    RunConfig cfg;
    ModelParams params;
    if (a.ckpt.empty()) {
        params = init_model(cfg.model, 0);
    } else {
        Checkpoint ck = read_checkpoint(a.ckpt);
        cfg = ck.config;
        params = std::move(ck.params);
    }
    if (a.sizes.empty()) throw ValidationError("--sizes needs at least one entry");
    json eff = config_to_json(cfg);
    eff["bench"] = {{"sizes", a.sizes}, {"ckpt", a.ckpt}, {"repeats", a.repeats}, {"out", a.out}};
    echo("bench", eff);

    std::vector<BenchTiming> rows;
    std::printf("%10s %14s %14s %14s\n", "vertices", "lsdmp_s", "gsa_s", "step_s");
    for (std::size_t n : a.sizes) {
        rows.push_back(bench_size(params, cfg, n, a.repeats));
        const BenchTiming& r = rows.back();
        std::printf("%10zu %14.6e %14.6e %14.6e\n", r.vertices, r.lsdmp_seconds, r.gsa_seconds, r.step_seconds);
        std::fflush(stdout);
    }
    std::printf("\n%10s %10s %10s %10s %10s\n", "from", "to", "lsdmp", "gsa", "step");
    json ratios = json::array();
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const BenchTiming &p = rows[i - 1], &r = rows[i];
        const double l = r.lsdmp_seconds / p.lsdmp_seconds, g = r.gsa_seconds / p.gsa_seconds,
                     s = r.step_seconds / p.step_seconds;
        std::printf("%10zu %10zu %10.3f %10.3f %10.3f\n", p.vertices, r.vertices, l, g, s);
        ratios.push_back({{"from", p.vertices}, {"to", r.vertices}, {"lsdmp", l}, {"gsa", g}, {"step", s}});
    }
    if (!a.out.empty()) {
        ensure_dir(a.out);
        json timings = json::array();
        for (const BenchTiming& r : rows) {
            timings.push_back({{"vertices", r.vertices},
                               {"lsdmp_seconds", r.lsdmp_seconds},
                               {"gsa_seconds", r.gsa_seconds},
                               {"step_seconds", r.step_seconds}});
        }
        open_out(fs::path(a.out) / "bench.json") << json{{"timings", timings}, {"ratios", ratios}}.dump(2) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cloth simulation with smoothed message passing and geodesic attention"};
    app.require_subcommand(1);

    PreprocessArgs pre;
    CLI::App* pre_cmd = app.add_subcommand("preprocess", "Geodesic embedding of a garment mesh");
    pre_cmd->add_option("--garment", pre.garment, "OBJ path or grid:N[xM][:SIZE]")->required();
    pre_cmd->add_option("--embed-dim", pre.embed_dim, "Embedding dimension")->check(CLI::PositiveNumber);
    pre_cmd->add_option("--out", pre.out, "Output directory")->required();
    pre_cmd->add_option("--config", pre.config, "Config file for the geodesic section");
    pre_cmd->add_option("--seed", pre.seed, "Seed for random initialization");
    pre_cmd->add_flag("--keep-distances", pre.keep_distances, "Store the geodesic distance matrix");

    TrainArgs tr;
    CLI::App* tr_cmd = app.add_subcommand("train", "Self-supervised training");
    tr_cmd->add_option("--config", tr.config, "Run config (JSON)")->required();
    tr_cmd->add_option("--out", tr.out, "Output directory")->required();
    tr_cmd->add_option("--iters", tr.iters, "Override train.iterations")->check(CLI::PositiveNumber);
    tr_cmd->add_option("--seed", tr.seed, "Override train.seed");

    SimulateArgs sim;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "Roll out a trained model");
    sim_cmd->add_option("--ckpt", sim.ckpt, "Checkpoint")->required();
    sim_cmd->add_option("--garment", sim.garment, "OBJ path or grid spec")->required();
    sim_cmd->add_option("--embedding", sim.embedding, "Embedding file from preprocess (computed when omitted)");
    sim_cmd->add_option("--body", sim.body, "static_sphere, swinging_capsule or translating_capsule");
    sim_cmd->add_option("--amplitude", sim.amplitude, "Swing angle (rad) or speed (m/s)");
    sim_cmd->add_option("--frequency", sim.frequency, "Swing frequency (Hz)");
    sim_cmd->add_option("--frames", sim.frames, "Number of frames");
    sim_cmd->add_option("--dt", sim.dt, "Time step (s)")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--out", sim.out, "Output directory")->required();

    EvalArgs ev;
    CLI::App* ev_cmd = app.add_subcommand("eval", "Loss breakdown over a list of scenes");
    ev_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
    ev_cmd->add_option("--scenes", ev.scenes, "JSON scene list")->required();
    ev_cmd->add_option("--report", ev.report, "Report path")->required();
    ev_cmd->add_option("--frames", ev.frames, "Rollout length per scene");

    BenchArgs be;
    CLI::App* be_cmd = app.add_subcommand("bench", "Time LSDMP, GSA and a full step against garment size");
    be_cmd->add_option("--sizes", be.sizes, "Vertex counts, comma separated")->required()->delimiter(',');
    be_cmd->add_option("--ckpt", be.ckpt, "Checkpoint (fresh default model when omitted)");
    be_cmd->add_option("--repeats", be.repeats, "Timed runs per size")->check(CLI::PositiveNumber);
    be_cmd->add_option("--out", be.out, "Directory for bench.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*pre_cmd) return run_preprocess(pre, *pre_cmd);
        if (*tr_cmd) return run_train(tr, *tr_cmd);
        if (*sim_cmd) return run_simulate(sim, *sim_cmd);
        if (*ev_cmd) return run_eval(ev);
        if (*be_cmd) return run_bench(be);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
