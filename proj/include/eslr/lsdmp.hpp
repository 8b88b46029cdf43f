#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "eslr/mesh.hpp"
#include "eslr/params.hpp"
#include "eslr/tensor.hpp"

namespace eslr {

/// Vertex numbering: garment vertices first, then the body vertices that
/// touch at least one world edge this step. Every mesh edge and world pair
/// appears as two directed edges (receiver <- sender).
struct GraphIndex {
    std::size_t garment_count = 0;
    std::size_t vertex_count = 0;
    std::vector<std::uint32_t> mesh_receivers;
    std::vector<std::uint32_t> mesh_senders;
    std::vector<std::uint32_t> world_receivers;
    std::vector<std::uint32_t> world_senders;
    /// Graph slot (minus garment_count) -> body mesh vertex id.
    std::vector<std::uint32_t> body_vertices;
};

struct GraphInputs {
    std::shared_ptr<const GraphIndex> index;
    Tensor vertex_features;      // vertex_count x 8
    Tensor mesh_edge_features;   // directed mesh edges x 8
    Tensor world_edge_features;  // directed world edges x 4
};

/// Per-frame geometry needed to assemble encoder inputs.
struct GraphFrame {
    const Positions* garment_pos = nullptr;
    const Positions* garment_vel = nullptr;
    const Positions* garment_rest = nullptr;
    const std::vector<Triangle>* garment_triangles = nullptr;
    const Topology* garment_topology = nullptr;
    const Positions* body_pos = nullptr;
    const Positions* body_vel = nullptr;
    const Positions* body_normals = nullptr;
    const WorldEdgeSet* world_edges = nullptr;
    /// Positions and lengths are divided by `length_unit`, velocities by
    /// `velocity_unit`, so features are O(1) regardless of garment scale.
    double length_unit = 1.0;
    double velocity_unit = 1.0;
};

GraphInputs build_graph_inputs(const GraphFrame& frame);

struct LatentGraph {
    std::shared_ptr<const GraphIndex> index;
    Var vertex;
    Var mesh_edge;
    Var world_edge;
};

/// Runs the three encoder MLPs (`encoder.vertex`, `encoder.mesh_edge`,
/// `encoder.world_edge`).
LatentGraph encode(const GraphInputs& inputs, const BoundParams& params);

struct EdgeUpdate {
    Var mesh;
    Var world;
};

/// e^a = f_e(e, v_recv, v_send) + e with separate MLPs for mesh and world edges.
EdgeUpdate mp_edge_update(const LatentGraph& lg, const BoundParams& params, const std::string& prefix);

/// v^a = f_v(v, sum of mesh messages, sum of world messages) + v.
Var mp_vertex_update(const LatentGraph& lg, const EdgeUpdate& edges, const BoundParams& params,
                     const std::string& prefix);

/// One parameter-free propagation step over garment mesh edges:
/// v_i <- mean over mesh neighbors j of (v_j + e_ij). Vertices without mesh
/// neighbors (including every body vertex) keep their features.
Var laplacian_smooth_step(Var vertex, Var mesh_edge, const GraphIndex& index);

LatentGraph lsdmp_layer(const LatentGraph& lg, const BoundParams& params, std::size_t layer,
                        std::size_t smoothing_steps);

LatentGraph lsdmp_forward(const LatentGraph& lg, const BoundParams& params, std::size_t layers,
                          std::size_t smoothing_steps);

}  // namespace eslr
