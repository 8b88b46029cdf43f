#include "eslr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <optional>

#include "eslr/error.hpp"

namespace eslr {

SceneSample sample_scene(std::size_t scene_count, double max_time_offset, Rng& rng) {
    if (scene_count == 0) throw ValidationError("scene list is empty");
    SceneSample s;
    s.scene = static_cast<std::size_t>(rng.below(scene_count));
    s.time_offset = max_time_offset > 0.0 ? rng.uniform(0.0, max_time_offset) : 0.0;
    return s;
}

SimState warm_start(const ModelParams& params, const ModelConfig& model, const GarmentAsset& garment,
                    const BodyModel& body, double t0, const SimConfig& sim, const PhysicsConfig& physics) {
    SimState s = initial_state(garment, body, t0, sim, physics);
    for (std::size_t f = 0; f < sim.warmup_frames; ++f) s = step(params, model, garment, body, s).next;
    return s;
}

void clip_gradients(Gradients& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
        for (double x : g.data()) sq += x * x;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double s = max_norm / norm;
    for (auto& [name, g] : grads) {
        for (double& x : g.data()) x *= s;
    }
}

ModelParams train(const std::vector<TrainScene>& scenes, const ModelConfig& model, ModelParams params,
                  const TrainConfig& cfg, const PhysicsConfig& physics, const LossWeights& weights,
                  const SimConfig& sim, const TrainCallbacks& callbacks) {
    if (cfg.iterations == 0) throw ValidationError("iterations must be at least 1");
    if (!(cfg.adam.learning_rate >= 0.0)) throw ValidationError("learning rate must be non-negative");
    if (scenes.empty()) throw ValidationError("scene list is empty");
    validate(physics);

    Rng rng(cfg.seed);
    AdamState adam;
    struct Cursor {
        std::optional<SimState> state;
        std::size_t steps = 0;
    };
    std::vector<Cursor> cursors(scenes.size());
    const auto start = std::chrono::steady_clock::now();

    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
        const SceneSample sample = sample_scene(scenes.size(), cfg.max_time_offset, rng);
        const TrainScene& scene = scenes[sample.scene];
        Cursor& cur = cursors[sample.scene];
        if (!cur.state || cur.steps >= cfg.rollout_horizon || !all_finite(*cur.state)) {
            cur.state = warm_start(params, model, *scene.garment, scene.body, sample.time_offset, sim, physics);
            cur.steps = 0;
        }

        Tape tape;
        BoundParams bound(tape, params);
        const StepGraph g = forward_step(bound, model, *scene.garment, scene.body, *cur.state);
        const LossTerms terms = total_loss(g.x_next, make_loss_inputs(*scene.garment, scene.body, *cur.state, g),
                                           physics_for(physics, *cur.state), weights);
        IterationLog log;
        log.iteration = it;
        log.loss = values_of(terms);
        if (!std::isfinite(log.loss.total)) {
            throw NumericalError(it, "non-finite loss at iteration " + std::to_string(it));
        }
        tape.backward(terms.total);
        Gradients grads = bound.gradients();
        if (cfg.grad_clip > 0.0) clip_gradients(grads, cfg.grad_clip);
        cur.state = advance(*cur.state, g.accel.value(), g.body_next);
        ++cur.steps;
        // a garment that has left the body's neighbourhood teaches nothing
        // about contact; start over from a fresh placement
        if (g.world_edges.pairs.empty()) cur.steps = cfg.rollout_horizon;
        adam_step(params, grads, adam, cfg.adam);

        log.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (callbacks.on_iteration) callbacks.on_iteration(log);
        const bool final_iter = it == cfg.iterations;
        if (callbacks.on_checkpoint && (final_iter || (cfg.checkpoint_interval > 0 && it % cfg.checkpoint_interval == 0))) {
            callbacks.on_checkpoint(it, params);
        }
    }
    return params;
}

}  // namespace eslr
