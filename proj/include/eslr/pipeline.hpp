#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "eslr/checkpoint.hpp"
#include "eslr/config.hpp"
#include "eslr/sim.hpp"

namespace eslr {

/// Geodesic distances followed by SMACOF with the configured options.
GeodesicEmbedding embed_mesh(const Mesh& mesh, const RunConfig& cfg, DistanceMatrix* distances = nullptr);

/// Garment plus its embedding computed in memory.
GarmentAsset build_asset(const std::string& garment, const RunConfig& cfg);

/// Garment plus its embedding read from the scene's ESLR-GEO1 file. A scene
/// without an embedding path is a ValidationError naming the garment.
GarmentAsset load_asset(const SceneSpec& scene, const RunConfig& cfg);

/// Training driver around `train`: writes `train_log.jsonl` and checkpoints
/// (`ckpt_{iteration:06}.ckpt` at the interval plus `final.ckpt`) into
/// `out_dir` when it is non-empty. Returns the trained parameters.
ModelParams run_training(const RunConfig& cfg, const std::vector<GarmentAsset>& assets, const std::string& out_dir,
                         const std::function<void(const IterationLog&)>& on_iteration = {});

std::string log_record(const IterationLog& log);

struct EvalRow {
    std::string scene;
    LossValues loss;  // per-frame mean over the evaluation rollout
    double max_penetration = 0.0;
};

/// Mean per-frame loss breakdown over a `frames`-step rollout started from
/// the placement at t = 0.
EvalRow evaluate_scene(const ModelParams& params, const RunConfig& cfg, const GarmentAsset& asset,
                       const BodyMotion& motion, std::size_t frames, const std::string& label);

/// Scientific-notation table with the six loss columns plus Total.
std::string format_report(const std::vector<EvalRow>& rows, const LossWeights& weights);

struct BenchTiming {
    std::size_t vertices = 0;
    double lsdmp_seconds = 0.0;  // encoder included
    double gsa_seconds = 0.0;
    double step_seconds = 0.0;
};

/// Median wall times over `repeats` runs (after one untimed run) on a grid
/// garment with about `vertices` vertices over the static sphere. The
/// embedding is random: timings do not depend on its values.
BenchTiming bench_size(const ModelParams& params, const RunConfig& cfg, std::size_t vertices, std::size_t repeats);

/// Trailing moving average: entry i averages [max(0, i-window+1), i].
std::vector<double> trailing_mean(const std::vector<double>& v, std::size_t window);

}  // namespace eslr
