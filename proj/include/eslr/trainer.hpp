#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eslr/body.hpp"
#include "eslr/params.hpp"
#include "eslr/physics.hpp"
#include "eslr/rng.hpp"
#include "eslr/sim.hpp"

namespace eslr {

struct SceneSpec {
    std::string garment;    // OBJ path or grid:N spec
    std::string embedding;  // ESLR-GEO1 file
    BodyMotion body;
};

struct TrainConfig {
    std::size_t iterations = 2000;
    AdamHyper adam;
    std::uint64_t seed = 0;
    /// 0 writes only the final checkpoint.
    std::size_t checkpoint_interval = 0;
    /// Steps a scene's trajectory runs before it is reset to its placement.
    std::size_t rollout_horizon = 30;
    /// Body motion time offsets are drawn from [0, max_time_offset].
    double max_time_offset = 2.0;
    /// Gradients are rescaled to this global L2 norm when larger; 0 disables.
    double grad_clip = 0.0;
    std::vector<SceneSpec> scenes;
};

struct SceneSample {
    std::size_t scene = 0;
    double time_offset = 0.0;
};

/// Uniform over scenes and over [0, max_time_offset].
SceneSample sample_scene(std::size_t scene_count, double max_time_offset, Rng& rng);

struct TrainScene {
    const GarmentAsset* garment = nullptr;
    BodyModel body;
};

struct IterationLog {
    std::size_t iteration = 0;
    LossValues loss;
    double wall_time = 0.0;
};

struct TrainCallbacks {
    std::function<void(const IterationLog&)> on_iteration;
    std::function<void(std::size_t iteration, const ModelParams&)> on_checkpoint;
};

/// Per iteration: sample a scene, continue its trajectory (resetting to a
/// fresh placement plus `warmup_frames` model steps when the horizon is
/// reached), run one step, minimize the weighted physics loss with Adam and
/// keep the predicted state as the scene's next starting point. Throws
/// NumericalError with the iteration number on a non-finite loss.
ModelParams train(const std::vector<TrainScene>& scenes, const ModelConfig& model, ModelParams params,
                  const TrainConfig& cfg, const PhysicsConfig& physics, const LossWeights& weights,
                  const SimConfig& sim, const TrainCallbacks& callbacks = {});

/// Rescales all gradients together so their global L2 norm is at most
/// `max_norm`.
void clip_gradients(Gradients& grads, double max_norm);

/// Placement at `t0` followed by `sim.warmup_frames` steps of the given
/// model, run without recording gradients.
SimState warm_start(const ModelParams& params, const ModelConfig& model, const GarmentAsset& garment,
                    const BodyModel& body, double t0, const SimConfig& sim, const PhysicsConfig& physics);

}  // namespace eslr
