#include "eslr/config.hpp"

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "eslr/error.hpp"

namespace eslr {

using nlohmann::json;

namespace {

// Reads declared keys of one JSON object and rejects everything else.
class Section {
   public:
    Section(json root, std::string name) : name_(std::move(name)), obj_(std::move(root)) {
        if (!obj_.is_null() && !obj_.is_object()) {
            throw ValidationError("config section `" + name_ + "` must be an object");
        }
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!obj_.contains(key)) return;
        const json& v = obj_.at(key);
        // nlohmann silently wraps -1 or truncates 2.5 into an unsigned
        if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
                throw ValidationError("config key `" + name_ + "." + key + "` must be a non-negative integer");
            }
        }
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ValidationError("config key `" + name_ + "." + key + "` has the wrong type");
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        if (!obj_.contains(key)) return nullptr;
        return &obj_.at(key);
    }

    void finish() const {
        if (obj_.is_null()) return;
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.count(key)) throw ValidationError("unknown config key `" + name_ + "." + key + "`");
        }
    }

   private:
    std::string name_;
    json obj_;
    std::set<std::string> seen_;
};

json section_or_null(const json& j, const char* key) { return j.contains(key) ? j.at(key) : json(); }

SceneSpec scene_from_json(const json& j, std::size_t index) {
    SceneSpec s;
    Section sec(j, "train.scenes[" + std::to_string(index) + "]");
    std::string body = to_string(s.body.preset);
    sec.read("garment", s.garment);
    sec.read("embedding", s.embedding);
    sec.read("body", body);
    sec.read("amplitude", s.body.amplitude);
    sec.read("frequency", s.body.frequency);
    sec.read("seed", s.body.seed);
    sec.finish();
    s.body.preset = parse_body_preset(body);
    return s;
}

}  // namespace

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    RunConfig c;
    Section root(j, "config");

    Section mesh(section_or_null(j, "mesh"), "mesh");
    root.child("mesh");
    mesh.read("density", c.physics.density);
    mesh.read("radius_factor", c.sim.radius_factor);
    mesh.finish();

    Section geo(section_or_null(j, "geodesic"), "geodesic");
    root.child("geodesic");
    std::string init = c.mds.init == MdsInit::classical ? "classical" : "random";
    geo.read("embed_dim", c.mds.k);
    geo.read("max_iters", c.mds.max_iters);
    geo.read("tol", c.mds.tol);
    geo.read("seed", c.mds.seed);
    geo.read("init", init);
    geo.read("standardize", c.model.standardize_embedding);
    geo.finish();
    if (init == "classical") {
        c.mds.init = MdsInit::classical;
    } else if (init == "random") {
        c.mds.init = MdsInit::random;
    } else {
        throw ValidationError("geodesic.init must be `classical` or `random`, got `" + init + "`");
    }
    c.model.embed_dim = c.mds.k;

    Section model(section_or_null(j, "model"), "model");
    root.child("model");
    model.read("hidden", c.model.hidden);
    model.read("layers", c.model.layers);
    model.read("smoothing_steps", c.model.smoothing_steps);
    model.read("gsa_blocks", c.model.gsa_blocks);
    model.read("accel_unit", c.model.accel_unit);
    model.read("gravity_prior", c.model.gravity_prior);
    model.finish();

    Section phys(section_or_null(j, "physics"), "physics");
    root.child("physics");
    phys.read("stretch_stiffness", c.physics.stretch_stiffness);
    phys.read("bending_stiffness", c.physics.bending_stiffness);
    phys.read("collision_margin", c.physics.collision_margin);
    phys.read("collision_stiffness", c.physics.collision_stiffness);
    phys.read("gravity", c.physics.gravity);
    phys.read("friction", c.physics.friction);
    phys.read("huber_delta", c.physics.huber_delta);
    phys.finish();

    Section w(section_or_null(j, "weights"), "weights");
    root.child("weights");
    w.read("stretch", c.weights.stretch);
    w.read("bending", c.weights.bending);
    w.read("collision", c.weights.collision);
    w.read("gravity", c.weights.gravity);
    w.read("inertia", c.weights.inertia);
    w.read("friction", c.weights.friction);
    w.finish();

    Section sim(section_or_null(j, "sim"), "sim");
    root.child("sim");
    sim.read("dt", c.sim.dt);
    sim.read("placement_height", c.sim.placement_height);
    sim.read("warmup_frames", c.sim.warmup_frames);
    sim.finish();
    c.physics.dt = c.sim.dt;

    Section tr(section_or_null(j, "train"), "train");
    root.child("train");
    tr.read("iterations", c.train.iterations);
    tr.read("learning_rate", c.train.adam.learning_rate);
    tr.read("beta1", c.train.adam.beta1);
    tr.read("beta2", c.train.adam.beta2);
    tr.read("adam_eps", c.train.adam.eps);
    tr.read("seed", c.train.seed);
    tr.read("checkpoint_interval", c.train.checkpoint_interval);
    tr.read("rollout_horizon", c.train.rollout_horizon);
    tr.read("max_time_offset", c.train.max_time_offset);
    tr.read("grad_clip", c.train.grad_clip);
    if (const json* scenes = tr.child("scenes")) {
        if (!scenes->is_array()) throw ValidationError("train.scenes must be an array");
        c.train.scenes.clear();
        for (std::size_t i = 0; i < scenes->size(); ++i) c.train.scenes.push_back(scene_from_json((*scenes)[i], i));
    }
    tr.finish();
    root.finish();
    validate(c);
    return c;
}

json config_to_json(const RunConfig& c) {
    json scenes = json::array();
    for (const SceneSpec& s : c.train.scenes) {
        scenes.push_back({{"garment", s.garment},
                          {"embedding", s.embedding},
                          {"body", to_string(s.body.preset)},
                          {"amplitude", s.body.amplitude},
                          {"frequency", s.body.frequency},
                          {"seed", s.body.seed}});
    }
    return json{
        {"mesh", {{"density", c.physics.density}, {"radius_factor", c.sim.radius_factor}}},
        {"geodesic",
         {{"embed_dim", c.mds.k},
          {"max_iters", c.mds.max_iters},
          {"tol", c.mds.tol},
          {"seed", c.mds.seed},
          {"init", c.mds.init == MdsInit::classical ? "classical" : "random"},
          {"standardize", c.model.standardize_embedding}}},
        {"model",
         {{"hidden", c.model.hidden},
          {"layers", c.model.layers},
          {"smoothing_steps", c.model.smoothing_steps},
          {"gsa_blocks", c.model.gsa_blocks},
          {"accel_unit", c.model.accel_unit},
          {"gravity_prior", c.model.gravity_prior}}},
        {"physics",
         {{"stretch_stiffness", c.physics.stretch_stiffness},
          {"bending_stiffness", c.physics.bending_stiffness},
          {"collision_margin", c.physics.collision_margin},
          {"collision_stiffness", c.physics.collision_stiffness},
          {"gravity", c.physics.gravity},
          {"friction", c.physics.friction},
          {"huber_delta", c.physics.huber_delta}}},
        {"weights",
         {{"stretch", c.weights.stretch},
          {"bending", c.weights.bending},
          {"collision", c.weights.collision},
          {"gravity", c.weights.gravity},
          {"inertia", c.weights.inertia},
          {"friction", c.weights.friction}}},
        {"sim",
         {{"dt", c.sim.dt}, {"placement_height", c.sim.placement_height}, {"warmup_frames", c.sim.warmup_frames}}},
        {"train",
         {{"iterations", c.train.iterations},
          {"learning_rate", c.train.adam.learning_rate},
          {"beta1", c.train.adam.beta1},
          {"beta2", c.train.adam.beta2},
          {"adam_eps", c.train.adam.eps},
          {"seed", c.train.seed},
          {"checkpoint_interval", c.train.checkpoint_interval},
          {"rollout_horizon", c.train.rollout_horizon},
          {"max_time_offset", c.train.max_time_offset},
          {"grad_clip", c.train.grad_clip},
          {"scenes", scenes}}},
    };
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config `" + path + "`");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("config `" + path + "` is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

void save_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write `" + path + "`");
    out << config_to_json(cfg).dump(2) << "\n";
}

void validate(const RunConfig& c) {
    if (c.mds.k == 0) throw ValidationError("geodesic.embed_dim must be at least 1");
    if (c.mds.max_iters == 0) throw ValidationError("geodesic.max_iters must be at least 1");
    if (!(c.mds.tol > 0.0)) throw ValidationError("geodesic.tol must be positive");
    if (c.model.hidden == 0) throw ValidationError("model.hidden must be at least 1");
    if (!(c.model.accel_unit > 0.0)) throw ValidationError("model.accel_unit must be positive");
    if (c.model.embed_dim != c.mds.k) throw ValidationError("model and geodesic embedding dims differ");
    if (!(c.sim.dt > 0.0)) throw ValidationError("sim.dt must be positive");
    if (!(c.sim.radius_factor > 0.0)) throw ValidationError("mesh.radius_factor must be positive");
    if (c.train.iterations == 0) throw ValidationError("train.iterations must be at least 1");
    if (!(c.train.adam.learning_rate >= 0.0)) throw ValidationError("train.learning_rate must be non-negative");
    if (c.train.rollout_horizon == 0) throw ValidationError("train.rollout_horizon must be at least 1");
    if (!(c.train.grad_clip >= 0.0)) throw ValidationError("train.grad_clip must be non-negative");
    if (!(c.train.max_time_offset >= 0.0)) throw ValidationError("train.max_time_offset must be non-negative");
    validate(c.physics);
}

RunConfig desk_config() {
    RunConfig c;
    c.model.layers = 4;
    c.model.smoothing_steps = 3;
    c.model.gsa_blocks = 2;
    c.train.iterations = 2000;
    c.train.seed = 0;
    c.train.adam.learning_rate = 1e-3;
    c.train.grad_clip = 1.0;
    SceneSpec s;
    s.garment = "grid:10";
    s.body.preset = BodyPreset::static_sphere;
    c.train.scenes.push_back(s);
    return c;
}

}  // namespace eslr
