#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "eslr/body.hpp"
#include "eslr/geodesic.hpp"
#include "eslr/lsdmp.hpp"
#include "eslr/mesh.hpp"
#include "eslr/model.hpp"
#include "eslr/physics.hpp"

namespace eslr {

struct SimConfig {
    double dt = 1.0 / 30.0;
    /// World-edge radius as a multiple of the mean garment rest edge length.
    double radius_factor = 1.5;
    /// Gap between the garment's lowest point and the body apex at t = 0.
    double placement_height = 0.05;
    std::size_t warmup_frames = 5;
};

/// A garment mesh with everything derived from it at preprocess time.
struct GarmentAsset {
    std::string name;
    std::string embedding_name;
    Mesh mesh;
    Topology topology;
    RestState rest;
    Tensor embedding;  // n x k
    double world_radius = 0.0;
    /// Mean rest edge length; the unit of graph position features.
    double length_unit = 1.0;
};

/// Throws ValidationError when the embedding was computed for a different
/// mesh (row count mismatch).
GarmentAsset make_garment_asset(std::string name, Mesh mesh, const GeodesicEmbedding& embedding,
                                std::string embedding_name, double density, double radius_factor,
                                bool standardize_embedding);

struct SimState {
    std::size_t frame = 0;
    double time = 0.0;
    double dt = 1.0 / 30.0;
    Positions garment_pos;
    Positions garment_vel;
    Positions body_pos;
    Positions body_vel;
};

/// Rigid placement of the rest garment (rotation-free).
struct Placement {
    Vec3 translation;

    Positions apply(const Positions& rest) const;
    Positions inverse(const Positions& placed) const;
};

/// Centers the garment horizontally over the body and puts its lowest point
/// `height` above the body apex.
Placement placement_for(const Mesh& garment, const BodyModel& body, double height);

/// Placed rest pose with zero velocity; body evaluated at `t0`. Writes a
/// warning to `warn` when the placement already penetrates deeper than twice
/// the collision margin.
SimState initial_state(const GarmentAsset& garment, const BodyModel& body, double t0, const SimConfig& sim,
                       const PhysicsConfig& physics, std::ostream* warn = nullptr);

/// Everything one prediction step records on a tape.
struct StepGraph {
    WorldEdgeSet world_edges;
    std::vector<BodyContact> contacts;
    GraphInputs inputs;
    Var encoded_garment;
    Var lsdmp_garment;
    Var gsa_garment;
    Var fused;
    Var accel;   // n_G x 3
    Var x_next;  // n_G x 3
    BodyFrame body_next;
};

/// Rebuild world edges, encode, LSDMP and GSA side by side, fuse, decode,
/// integrate.
StepGraph forward_step(const BoundParams& params, const ModelConfig& model, const GarmentAsset& garment,
                       const BodyModel& body, const SimState& state);

LossInputs make_loss_inputs(const GarmentAsset& garment, const BodyModel& body, const SimState& state,
                            const StepGraph& graph);

/// Physics config with dt taken from the state.
PhysicsConfig physics_for(const PhysicsConfig& physics, const SimState& state);

SimState advance(const SimState& state, const Tensor& accel, const BodyFrame& body_next);

struct StepOutput {
    Tensor accel;
    SimState next;
    std::optional<LossValues> loss;
};

StepOutput step(const ModelParams& params, const ModelConfig& model, const GarmentAsset& garment,
                const BodyModel& body, const SimState& state, const PhysicsConfig* physics = nullptr,
                const LossWeights* weights = nullptr);

/// Deepest penetration of `state` against the body, using fresh world edges.
double measure_penetration(const GarmentAsset& garment, const BodyModel& body, const SimState& state);

struct FrameRecord {
    std::size_t frame = 0;
    LossValues loss;
    double max_penetration = 0.0;
};

/// Sequential steps; throws NumericalError carrying the frame index when a
/// state turns non-finite. `on_frame` sees every new state.
std::vector<FrameRecord> rollout(const SimState& initial, const ModelParams& params, const ModelConfig& model,
                                 const GarmentAsset& garment, const BodyModel& body, std::size_t frames,
                                 const PhysicsConfig& physics, const LossWeights& weights,
                                 const std::function<void(const SimState&, const FrameRecord&)>& on_frame = {});

bool all_finite(const SimState& state);

}  // namespace eslr
