#include "eslr/sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "eslr/error.hpp"
#include "eslr/gsa.hpp"

namespace eslr {

GarmentAsset make_garment_asset(std::string name, Mesh mesh, const GeodesicEmbedding& embedding,
                                std::string embedding_name, double density, double radius_factor,
                                bool standardize_embedding) {
    if (embedding.n != mesh.vertex_count()) {
        throw ValidationError("mesh '" + name + "' has " + std::to_string(mesh.vertex_count()) +
                              " vertices but embedding '" + embedding_name + "' was computed for " +
                              std::to_string(embedding.n) + "; run `preprocess` for this mesh");
    }
    if (!(radius_factor > 0.0)) throw ValidationError("radius factor must be positive");
    GarmentAsset g;
    g.name = std::move(name);
    g.embedding_name = std::move(embedding_name);
    g.topology = build_topology(mesh);
    g.rest = compute_rest_quantities(mesh, g.topology, density);
    g.mesh = std::move(mesh);
    const GeodesicEmbedding e = standardize_embedding ? standardized(embedding) : embedding;
    g.embedding = Tensor(Shape{e.n, e.k}, e.coords);
    g.length_unit = mean_edge_length(g.topology, g.rest);
    g.world_radius = radius_factor * g.length_unit;
    return g;
}

Positions Placement::apply(const Positions& rest) const {
    Positions out(rest.size());
    for (std::size_t i = 0; i < rest.size(); ++i) out[i] = rest[i] + translation;
    return out;
}

Positions Placement::inverse(const Positions& placed) const {
    Positions out(placed.size());
    for (std::size_t i = 0; i < placed.size(); ++i) out[i] = placed[i] - translation;
    return out;
}

Placement placement_for(const Mesh& garment, const BodyModel& body, double height) {
    Vec3 gc, bc;
    double gmin = INFINITY;
    for (const auto& v : garment.vertices) {
        gc += v;
        gmin = std::min(gmin, v.y);
    }
    gc *= 1.0 / static_cast<double>(garment.vertices.size());
    for (const auto& v : body.rest.vertices) bc += v;
    bc *= 1.0 / static_cast<double>(body.rest.vertices.size());
    return {{bc.x - gc.x, body_apex(body) + height - gmin, bc.z - gc.z}};
}

SimState initial_state(const GarmentAsset& garment, const BodyModel& body, double t0, const SimConfig& sim,
                       const PhysicsConfig& physics, std::ostream* warn) {
    if (!(sim.dt > 0.0)) throw ValidationError("dt must be positive");
    SimState s;
    s.frame = 0;
    s.time = t0;
    s.dt = sim.dt;
    s.garment_pos = placement_for(garment.mesh, body, sim.placement_height).apply(garment.mesh.vertices);
    s.garment_vel.assign(s.garment_pos.size(), Vec3{});
    BodyFrame bf = body_motion_eval(body, t0);
    s.body_pos = std::move(bf.positions);
    s.body_vel = std::move(bf.velocities);
    if (warn != nullptr) {
        const double depth = measure_penetration(garment, body, s);
        if (depth > 2.0 * physics.collision_margin) {
            *warn << "warning: initial placement of '" << garment.name << "' penetrates the body by " << depth
                  << " m\n";
        }
    }
    return s;
}

StepGraph forward_step(const BoundParams& params, const ModelConfig& model, const GarmentAsset& garment,
                       const BodyModel& body, const SimState& state) {
    Tape& tape = params.tape();
    const std::size_t ng = garment.mesh.vertex_count();
    if (garment.embedding.rows() != ng) {
        throw ValidationError("no embedding for mesh '" + garment.name + "'; run `preprocess`");
    }
    if (garment.embedding.cols() != model.embed_dim) {
        throw ValidationError("embedding '" + garment.embedding_name + "' has dimension " +
                              std::to_string(garment.embedding.cols()) + " but the model expects " +
                              std::to_string(model.embed_dim));
    }
    StepGraph g;
    g.world_edges = build_world_edges(state.garment_pos, state.body_pos, garment.world_radius);
    g.contacts = nearest_body_contacts(g.world_edges, state.garment_pos, state.body_pos);

    const Positions body_normals = vertex_normals(state.body_pos, body.rest.triangles);
    GraphFrame frame;
    frame.garment_pos = &state.garment_pos;
    frame.garment_vel = &state.garment_vel;
    frame.garment_rest = &garment.mesh.vertices;
    frame.garment_triangles = &garment.mesh.triangles;
    frame.garment_topology = &garment.topology;
    frame.body_pos = &state.body_pos;
    frame.body_vel = &state.body_vel;
    frame.body_normals = &body_normals;
    frame.world_edges = &g.world_edges;
    frame.length_unit = garment.length_unit;
    frame.velocity_unit = garment.length_unit / state.dt;
    g.inputs = build_graph_inputs(frame);

    const LatentGraph encoded = encode(g.inputs, params);
    const std::size_t h = model.hidden;
    g.encoded_garment = slice_rows(encoded.vertex, 0, ng);
    const LatentGraph processed = lsdmp_forward(encoded, params, model.layers, model.smoothing_steps);
    g.lsdmp_garment = slice_rows(processed.vertex, 0, ng);
    if (model.gsa_blocks > 0) {
        g.gsa_garment = gsa_forward(g.encoded_garment, tape.constant(garment.embedding), params, model.gsa_blocks);
    } else {
        g.gsa_garment = g.encoded_garment;
    }
    Var fusion_in = concat_cols({g.lsdmp_garment, g.gsa_garment});
    if (fusion_in.cols() != 2 * h) throw ShapeError("fusion input must have width 2h");
    g.fused = mlp_apply(params, "fusion", fusion_in);
    Var decoded = mul_scalar_var(mlp_apply(params, "decoder", g.fused), params["decoder.scale"]);
    if (model.gravity_prior) {
        Tensor down = Tensor::matrix(1, 3);
        down(0, 1) = -1.0;
        decoded = add_row(decoded, tape.constant(std::move(down)));
    }
    g.accel = scale(decoded, model.accel_unit);

    // x_{t+1} = x_t + dt (q_t + a dt)
    Positions inertial(ng);
    for (std::size_t i = 0; i < ng; ++i) inertial[i] = state.garment_pos[i] + state.garment_vel[i] * state.dt;
    g.x_next = add(tape.constant(positions_tensor(inertial)), scale(g.accel, state.dt * state.dt));
    g.body_next = body_motion_eval(body, state.time + state.dt);
    return g;
}

PhysicsConfig physics_for(const PhysicsConfig& physics, const SimState& state) {
    PhysicsConfig p = physics;
    p.dt = state.dt;
    return p;
}

LossInputs make_loss_inputs(const GarmentAsset& garment, const BodyModel& body, const SimState& state,
                            const StepGraph& graph) {
    LossInputs in;
    in.topology = &garment.topology;
    in.rest = &garment.rest;
    in.x_curr = state.garment_pos;
    in.q_curr = state.garment_vel;
    in.body_curr = state.body_pos;
    in.body_normals_curr = vertex_normals(state.body_pos, body.rest.triangles);
    in.body_next = graph.body_next.positions;
    in.body_normals_next = vertex_normals(graph.body_next.positions, body.rest.triangles);
    in.contacts = graph.contacts;
    return in;
}

SimState advance(const SimState& state, const Tensor& accel, const BodyFrame& body_next) {
    SimState next;
    next.frame = state.frame + 1;
    next.time = state.time + state.dt;
    next.dt = state.dt;
    const std::size_t ng = state.garment_pos.size();
    next.garment_pos.resize(ng);
    next.garment_vel.resize(ng);
    for (std::size_t i = 0; i < ng; ++i) {
        const Vec3 a{accel(i, 0), accel(i, 1), accel(i, 2)};
        next.garment_vel[i] = state.garment_vel[i] + a * state.dt;
        next.garment_pos[i] = state.garment_pos[i] + next.garment_vel[i] * state.dt;
    }
    next.body_pos = body_next.positions;
    next.body_vel = body_next.velocities;
    return next;
}

StepOutput step(const ModelParams& params, const ModelConfig& model, const GarmentAsset& garment,
                const BodyModel& body, const SimState& state, const PhysicsConfig* physics,
                const LossWeights* weights) {
    Tape tape;
    BoundParams bound(tape, params);
    const StepGraph g = forward_step(bound, model, garment, body, state);
    StepOutput out;
    out.accel = g.accel.value();
    out.next = advance(state, out.accel, g.body_next);
    if (physics != nullptr && weights != nullptr) {
        const LossTerms terms =
            total_loss(g.x_next, make_loss_inputs(garment, body, state, g), physics_for(*physics, state), *weights);
        out.loss = values_of(terms);
    }
    return out;
}

double measure_penetration(const GarmentAsset& garment, const BodyModel& body, const SimState& state) {
    const WorldEdgeSet edges = build_world_edges(state.garment_pos, state.body_pos, garment.world_radius);
    const auto contacts = nearest_body_contacts(edges, state.garment_pos, state.body_pos);
    return max_penetration(state.garment_pos, state.body_pos, vertex_normals(state.body_pos, body.rest.triangles),
                           contacts);
}

bool all_finite(const SimState& s) {
    for (const auto* arr : {&s.garment_pos, &s.garment_vel, &s.body_pos, &s.body_vel}) {
        for (const auto& v : *arr) {
            if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z)) return false;
        }
    }
    return true;
}

std::vector<FrameRecord> rollout(const SimState& initial, const ModelParams& params, const ModelConfig& model,
                                 const GarmentAsset& garment, const BodyModel& body, std::size_t frames,
                                 const PhysicsConfig& physics, const LossWeights& weights,
                                 const std::function<void(const SimState&, const FrameRecord&)>& on_frame) {
    if (frames == 0) throw ValidationError("rollout needs at least one frame");
    std::vector<FrameRecord> records;
    SimState state = initial;
    for (std::size_t f = 0; f < frames; ++f) {
        StepOutput out = step(params, model, garment, body, state, &physics, &weights);
        if (!all_finite(out.next)) {
            throw NumericalError(out.next.frame, "non-finite state at frame " + std::to_string(out.next.frame));
        }
        FrameRecord rec;
        rec.frame = out.next.frame;
        rec.loss = *out.loss;
        rec.max_penetration = measure_penetration(garment, body, out.next);
        state = std::move(out.next);
        if (on_frame) on_frame(state, rec);
        records.push_back(rec);
    }
    return records;
}

}  // namespace eslr
