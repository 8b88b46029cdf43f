#include "eslr/model.hpp"

#include <cmath>

#include "eslr/error.hpp"

namespace eslr {

std::string lsdmp_prefix(std::size_t layer) { return "lsdmp.layer" + std::to_string(layer); }

std::string gsa_prefix(std::size_t block) { return "gsa.block" + std::to_string(block); }

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    const double bound = std::sqrt(3.0 / static_cast<double>(rows));
    Tensor w = Tensor::matrix(rows, cols);
    for (auto& x : w.data()) x = rng.uniform(-bound, bound);
    return w;
}

}  // namespace

ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.hidden == 0) throw ValidationError("hidden width must be positive");
    Rng rng(seed);
    ModelParams p;
    const std::size_t h = cfg.hidden;
    add_mlp(p, "encoder.vertex", {kVertexInputWidth, h, h, 2, true}, rng);
    add_mlp(p, "encoder.mesh_edge", {kMeshEdgeInputWidth, h, h, 2, true}, rng);
    add_mlp(p, "encoder.world_edge", {kWorldEdgeInputWidth, h, h, 2, true}, rng);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string pre = lsdmp_prefix(l);
        add_mlp(p, pre + ".f_e_mesh", {3 * h, h, h, 2, true}, rng);
        add_mlp(p, pre + ".f_e_world", {3 * h, h, h, 2, true}, rng);
        add_mlp(p, pre + ".f_v", {3 * h, h, h, 2, true}, rng);
        add_mlp(p, pre + ".f_v_prime", {h, h, h, 2, true}, rng);
    }
    for (std::size_t b = 0; b < cfg.gsa_blocks; ++b) {
        const std::string pre = gsa_prefix(b);
        p.add(pre + ".norm.gamma", Tensor(Shape{h}, 1.0));
        p.add(pre + ".norm.beta", Tensor(Shape{h}));
        p.add(pre + ".wq", uniform_matrix(h + cfg.embed_dim, h, rng));
        p.add(pre + ".wk", uniform_matrix(h + cfg.embed_dim, h, rng));
        p.add(pre + ".wv", uniform_matrix(h, h, rng));
        p.add(pre + ".wo", uniform_matrix(h, h, rng));
    }
    add_mlp(p, "fusion", {2 * h, h, h, 2, true}, rng);
    add_mlp(p, "decoder", {h, h, 3, 2, false}, rng);
    // an untrained model predicts zero acceleration, so early training
    // states stay close to the placement instead of being thrown around
    for (auto& x : p.mutable_value("decoder.l2.weight").data()) x = 0.0;
    p.add("decoder.scale", Tensor(Shape{1}, 1.0));
    return p;
}

void zero_processor_outputs(ModelParams& params, const ModelConfig& cfg) {
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        for (const char* mlp : {".f_e_mesh", ".f_e_world", ".f_v", ".f_v_prime"}) {
            const std::string base = lsdmp_prefix(l) + mlp + ".l2";
            for (auto& x : params.mutable_value(base + ".weight").data()) x = 0.0;
            for (auto& x : params.mutable_value(base + ".bias").data()) x = 0.0;
        }
    }
}

void check_model_params(const ModelParams& params, const ModelConfig& cfg) {
    const ModelParams expected = init_model(cfg, 0);
    if (expected.size() != params.size()) {
        throw ValidationError("checkpoint holds " + std::to_string(params.size()) + " tensors, config expects " +
                              std::to_string(expected.size()));
    }
    for (const auto& e : expected.entries()) {
        if (!params.contains(e.name)) throw ValidationError("checkpoint is missing parameter '" + e.name + "'");
        if (params.get(e.name).shape() != e.value.shape()) {
            throw ValidationError("parameter '" + e.name + "' has shape " + shape_str(params.get(e.name).shape()) +
                                  ", config expects " + shape_str(e.value.shape()));
        }
    }
}

}  // namespace eslr
