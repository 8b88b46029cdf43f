#include "eslr/lsdmp.hpp"

#include <algorithm>

#include "eslr/error.hpp"
#include "eslr/model.hpp"

namespace eslr {

namespace {

void put_vec(Tensor& t, std::size_t row, std::size_t col, const Vec3& v) {
    t(row, col) = v.x;
    t(row, col + 1) = v.y;
    t(row, col + 2) = v.z;
}

}  // namespace

GraphInputs build_graph_inputs(const GraphFrame& f) {
    const Positions& xg = *f.garment_pos;
    const Positions& xb = *f.body_pos;
    const std::size_t ng = xg.size();
    if (!(f.length_unit > 0.0) || !(f.velocity_unit > 0.0)) throw ValidationError("feature units must be positive");
    const double inv_len = 1.0 / f.length_unit;
    const double inv_vel = 1.0 / f.velocity_unit;
    if (f.garment_vel->size() != ng || f.garment_rest->size() != ng) {
        throw ShapeError("build_graph_inputs: garment arrays disagree in length");
    }

    auto index = std::make_shared<GraphIndex>();
    index->garment_count = ng;

    // compact body slots: only vertices with a world edge enter the graph
    std::vector<std::uint32_t> slot_of(xb.size(), UINT32_MAX);
    for (const auto& [g, b] : f.world_edges->pairs) {
        if (slot_of[b] == UINT32_MAX) slot_of[b] = 0;
    }
    for (std::uint32_t b = 0; b < xb.size(); ++b) {
        if (slot_of[b] != UINT32_MAX) {
            slot_of[b] = static_cast<std::uint32_t>(index->body_vertices.size());
            index->body_vertices.push_back(b);
        }
    }
    index->vertex_count = ng + index->body_vertices.size();

    GraphInputs in;
    in.vertex_features = Tensor::matrix(index->vertex_count, 8);
    const Positions normals = vertex_normals(xg, *f.garment_triangles);
    for (std::size_t i = 0; i < ng; ++i) {
        in.vertex_features(i, 0) = 1.0;
        put_vec(in.vertex_features, i, 2, (*f.garment_vel)[i] * inv_vel);
        put_vec(in.vertex_features, i, 5, normals[i]);
    }
    for (std::size_t s = 0; s < index->body_vertices.size(); ++s) {
        const auto b = index->body_vertices[s];
        in.vertex_features(ng + s, 1) = 1.0;
        put_vec(in.vertex_features, ng + s, 2, (*f.body_vel)[b] * inv_vel);
        put_vec(in.vertex_features, ng + s, 5, (*f.body_normals)[b]);
    }

    const auto& edges = f.garment_topology->mesh_edges;
    in.mesh_edge_features = Tensor::matrix(2 * edges.size(), 8);
    const Positions& rest = *f.garment_rest;
    std::size_t row = 0;
    for (const auto& [a, b] : edges) {
        for (int dir = 0; dir < 2; ++dir) {
            const std::uint32_t recv = dir == 0 ? a : b;
            const std::uint32_t send = dir == 0 ? b : a;
            index->mesh_receivers.push_back(recv);
            index->mesh_senders.push_back(send);
            const Vec3 d = (xg[recv] - xg[send]) * inv_len;
            const Vec3 dr = (rest[recv] - rest[send]) * inv_len;
            put_vec(in.mesh_edge_features, row, 0, d);
            in.mesh_edge_features(row, 3) = norm(d);
            put_vec(in.mesh_edge_features, row, 4, dr);
            in.mesh_edge_features(row, 7) = norm(dr);
            ++row;
        }
    }

    const auto& pairs = f.world_edges->pairs;
    in.world_edge_features = Tensor::matrix(2 * pairs.size(), 4);
    row = 0;
    for (const auto& [g, b] : pairs) {
        const auto body_slot = static_cast<std::uint32_t>(ng + slot_of[b]);
        for (int dir = 0; dir < 2; ++dir) {
            const std::uint32_t recv = dir == 0 ? g : body_slot;
            const std::uint32_t send = dir == 0 ? body_slot : g;
            index->world_receivers.push_back(recv);
            index->world_senders.push_back(send);
            const Vec3 d = (dir == 0 ? xg[g] - xb[b] : xb[b] - xg[g]) * inv_len;
            put_vec(in.world_edge_features, row, 0, d);
            in.world_edge_features(row, 3) = norm(d);
            ++row;
        }
    }
    in.index = std::move(index);
    return in;
}

LatentGraph encode(const GraphInputs& inputs, const BoundParams& params) {
    Tape& tape = params.tape();
    LatentGraph lg;
    lg.index = inputs.index;
    lg.vertex = mlp_apply(params, "encoder.vertex", tape.constant(inputs.vertex_features));
    lg.mesh_edge = mlp_apply(params, "encoder.mesh_edge", tape.constant(inputs.mesh_edge_features));
    lg.world_edge = mlp_apply(params, "encoder.world_edge", tape.constant(inputs.world_edge_features));
    return lg;
}

EdgeUpdate mp_edge_update(const LatentGraph& lg, const BoundParams& params, const std::string& prefix) {
    const GraphIndex& idx = *lg.index;
    auto update = [&](Var e, const std::vector<std::uint32_t>& recv, const std::vector<std::uint32_t>& send,
                      const std::string& mlp) {
        Var in = concat_cols({e, gather_rows(lg.vertex, recv), gather_rows(lg.vertex, send)});
        return add(mlp_apply(params, prefix + mlp, in), e);
    };
    return {update(lg.mesh_edge, idx.mesh_receivers, idx.mesh_senders, ".f_e_mesh"),
            update(lg.world_edge, idx.world_receivers, idx.world_senders, ".f_e_world")};
}

Var mp_vertex_update(const LatentGraph& lg, const EdgeUpdate& edges, const BoundParams& params,
                     const std::string& prefix) {
    const GraphIndex& idx = *lg.index;
    Var mesh_sum = segment_sum(edges.mesh, idx.mesh_receivers, idx.vertex_count);
    Var world_sum = segment_sum(edges.world, idx.world_receivers, idx.vertex_count);
    Var in = concat_cols({lg.vertex, mesh_sum, world_sum});
    return add(mlp_apply(params, prefix + ".f_v", in), lg.vertex);
}

Var laplacian_smooth_step(Var vertex, Var mesh_edge, const GraphIndex& index) {
    Tape& tape = *vertex.tape;
    const std::size_t n = index.vertex_count;
    if (vertex.rows() != n || mesh_edge.rows() != index.mesh_receivers.size()) {
        throw ShapeError("laplacian_smooth_step: feature rows " + shape_str(vertex.shape()) + " / " +
                         shape_str(mesh_edge.shape()) + " do not match the graph");
    }
    Tensor inv_count = Tensor::matrix(n, 1);
    for (auto r : index.mesh_receivers) inv_count[r] += 1.0;
    Tensor keep = Tensor::matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (inv_count[i] > 0.0) {
            inv_count[i] = 1.0 / inv_count[i];
        } else {
            keep[i] = 1.0;
        }
    }
    Var messages = add(gather_rows(vertex, index.mesh_senders), mesh_edge);
    Var averaged = mul_col(segment_sum(messages, index.mesh_receivers, n), tape.constant(std::move(inv_count)));
    return add(averaged, mul_col(vertex, tape.constant(std::move(keep))));
}

LatentGraph lsdmp_layer(const LatentGraph& lg, const BoundParams& params, std::size_t layer,
                        std::size_t smoothing_steps) {
    const std::string prefix = lsdmp_prefix(layer);
    const EdgeUpdate edges = mp_edge_update(lg, params, prefix);
    const Var va = mp_vertex_update(lg, edges, params, prefix);
    Var vp = va;
    for (std::size_t s = 0; s < smoothing_steps; ++s) vp = laplacian_smooth_step(vp, edges.mesh, *lg.index);
    LatentGraph out;
    out.index = lg.index;
    out.vertex = add(mlp_apply(params, prefix + ".f_v_prime", vp), va);
    out.mesh_edge = edges.mesh;
    out.world_edge = edges.world;
    return out;
}

LatentGraph lsdmp_forward(const LatentGraph& lg, const BoundParams& params, std::size_t layers,
                          std::size_t smoothing_steps) {
    LatentGraph cur = lg;
    for (std::size_t l = 0; l < layers; ++l) cur = lsdmp_layer(cur, params, l, smoothing_steps);
    return cur;
}

}  // namespace eslr
