#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "eslr/params.hpp"

namespace eslr {

inline constexpr std::size_t kVertexInputWidth = 8;     // type one-hot, velocity, normal
inline constexpr std::size_t kMeshEdgeInputWidth = 8;   // rel. pos, |.|, rel. rest pos, |.|
inline constexpr std::size_t kWorldEdgeInputWidth = 4;  // rel. pos, |.|

struct ModelConfig {
    std::size_t hidden = 64;
    std::size_t layers = 15;
    std::size_t smoothing_steps = 3;
    std::size_t gsa_blocks = 4;
    std::size_t embed_dim = 8;
    bool standardize_embedding = false;
    /// Decoder outputs are accelerations in this unit (m/s^2).
    double accel_unit = 9.81;
    /// Adds -accel_unit along +y to every prediction, so the decoder only
    /// learns the deviation from free fall.
    bool gravity_prior = true;
};

std::string lsdmp_prefix(std::size_t layer);
std::string gsa_prefix(std::size_t block);

/// Encoders, L processor layers, B attention blocks, fusion and decoder,
/// seeded deterministically.
ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Zeroes the final linear layer of f_e (mesh and world), f_v and f'_v in
/// every processor layer, which makes the processor an identity map.
void zero_processor_outputs(ModelParams& params, const ModelConfig& cfg);

/// Shape-checks `params` against `cfg`; throws ValidationError on mismatch.
void check_model_params(const ModelParams& params, const ModelConfig& cfg);

}  // namespace eslr
