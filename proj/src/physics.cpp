#include "eslr/physics.hpp"

#include <cmath>
#include <numbers>

#include "eslr/error.hpp"

namespace eslr {

void validate(const PhysicsConfig& c) {
    if (c.stretch_stiffness < 0 || c.bending_stiffness < 0 || c.collision_stiffness < 0 || c.friction < 0) {
        throw ValidationError("stiffness and friction coefficients must be non-negative");
    }
    if (!(c.collision_margin > 0)) throw ValidationError("collision margin must be positive");
    if (!(c.dt > 0)) throw ValidationError("dt must be positive");
    if (!(c.density > 0)) throw ValidationError("density must be positive");
    if (!(c.huber_delta > 0)) throw ValidationError("huber delta must be positive");
}

Tensor positions_tensor(const Positions& pos) {
    Tensor t = Tensor::matrix(pos.size(), 3);
    for (std::size_t i = 0; i < pos.size(); ++i) {
        t(i, 0) = pos[i].x;
        t(i, 1) = pos[i].y;
        t(i, 2) = pos[i].z;
    }
    return t;
}

Positions positions_from(const Tensor& t) {
    if (t.cols() != 3) throw ShapeError("positions_from: expected n x 3, got " + shape_str(t.shape()));
    Positions p(t.rows());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = {t(i, 0), t(i, 1), t(i, 2)};
    return p;
}

Var stretch_energy(Var pos, const Topology& topo, const RestState& rest, double k_s) {
    Tape& tape = *pos.tape;
    std::vector<std::uint32_t> a, b;
    Tensor rest_len = Tensor::matrix(topo.mesh_edges.size(), 1);
    Tensor coeff = Tensor::matrix(topo.mesh_edges.size(), 1);
    for (std::size_t e = 0; e < topo.mesh_edges.size(); ++e) {
        a.push_back(topo.mesh_edges[e].first);
        b.push_back(topo.mesh_edges[e].second);
        rest_len[e] = rest.edge_rest_lengths[e];
        coeff[e] = 0.5 * k_s / rest.edge_rest_lengths[e];
    }
    Var d = sub(gather_rows(pos, a), gather_rows(pos, b));
    Var len = sqrt(dot_rows(d, d));
    Var strain = sub(len, tape.constant(std::move(rest_len)));
    return sum(mul(square(strain), tape.constant(std::move(coeff))));
}

Var bending_energy(Var pos, const Topology& topo, const RestState& rest, double k_b, std::size_t* degenerate) {
    Tape& tape = *pos.tape;
    const Positions p = positions_from(pos.value());
    std::vector<std::uint32_t> ia, ib, ic, id;
    std::vector<double> rest_theta;
    std::size_t skipped = 0;
    for (std::size_t k = 0; k < topo.dihedral_pairs.size(); ++k) {
        const auto& dp = topo.dihedral_pairs[k];
        const Vec3 e = p[dp.edge.second] - p[dp.edge.first];
        const Vec3 n1 = cross(e, p[dp.opposite[0]] - p[dp.edge.first]);
        const Vec3 n2 = cross(p[dp.opposite[1]] - p[dp.edge.first], e);
        if (squared_norm(e) == 0.0 || squared_norm(n1) == 0.0 || squared_norm(n2) == 0.0) {
            ++skipped;
            continue;
        }
        ia.push_back(dp.edge.first);
        ib.push_back(dp.edge.second);
        ic.push_back(dp.opposite[0]);
        id.push_back(dp.opposite[1]);
        rest_theta.push_back(rest.rest_dihedral_angles[k]);
    }
    if (degenerate != nullptr) *degenerate = skipped;
    if (ia.empty()) return tape.constant(Tensor::scalar(0.0));

    const std::size_t m = ia.size();
    Var xa = gather_rows(pos, ia);
    Var e = sub(gather_rows(pos, ib), xa);
    Var n1 = cross_rows(e, sub(gather_rows(pos, ic), xa));
    Var n2 = cross_rows(sub(gather_rows(pos, id), xa), e);
    Var sin_part = div(dot_rows(cross_rows(n1, n2), e), sqrt(dot_rows(e, e)));
    Var cos_part = dot_rows(n1, n2);
    // theta = pi - atan2(sin, cos)
    Tensor offset = Tensor::matrix(m, 1);
    for (std::size_t k = 0; k < m; ++k) offset[k] = std::numbers::pi - rest_theta[k];
    Var diff = sub(tape.constant(std::move(offset)), atan2(sin_part, cos_part));
    return scale(sum(square(diff)), 0.5 * k_b);
}

std::vector<BodyContact> nearest_body_contacts(const WorldEdgeSet& edges, const Positions& garment_pos,
                                               const Positions& body_pos) {
    std::vector<BodyContact> out;
    const auto& pairs = edges.pairs;
    for (std::size_t i = 0; i < pairs.size();) {
        std::size_t j = i;
        const auto g = pairs[i].first;
        std::uint32_t best = pairs[i].second;
        double best_d = squared_norm(garment_pos[g] - body_pos[best]);
        while (j < pairs.size() && pairs[j].first == g) {
            const double d = squared_norm(garment_pos[g] - body_pos[pairs[j].second]);
            if (d < best_d) {
                best_d = d;
                best = pairs[j].second;
            }
            ++j;
        }
        out.push_back({g, best});
        i = j;
    }
    return out;
}

namespace {

Tensor contact_rows(const std::vector<BodyContact>& contacts, const Positions& src, bool use_body) {
    Tensor t = Tensor::matrix(contacts.size(), 3);
    for (std::size_t k = 0; k < contacts.size(); ++k) {
        const Vec3& v = src[use_body ? contacts[k].body : contacts[k].garment];
        t(k, 0) = v.x;
        t(k, 1) = v.y;
        t(k, 2) = v.z;
    }
    return t;
}

std::vector<std::uint32_t> garment_ids(const std::vector<BodyContact>& contacts) {
    std::vector<std::uint32_t> ids;
    ids.reserve(contacts.size());
    for (const auto& c : contacts) ids.push_back(c.garment);
    return ids;
}

}  // namespace

Var collision_penalty(Var pos_g, const Positions& body_pos, const Positions& body_normals,
                      const std::vector<BodyContact>& contacts, double margin, double k_c) {
    Tape& tape = *pos_g.tape;
    if (contacts.empty()) return tape.constant(Tensor::scalar(0.0));
    Var xg = gather_rows(pos_g, garment_ids(contacts));
    Var rel = sub(xg, tape.constant(contact_rows(contacts, body_pos, true)));
    Var dist = dot_rows(rel, tape.constant(contact_rows(contacts, body_normals, true)));
    Var violation = relu(add_scalar(neg(dist), margin));
    return scale(sum(cube(violation)), k_c);
}

Var gravity_energy(Var pos_g, const std::vector<double>& masses, double g) {
    Tape& tape = *pos_g.tape;
    Tensor m = Tensor::matrix(masses.size(), 1);
    for (std::size_t i = 0; i < masses.size(); ++i) m[i] = masses[i] * g;
    return sum(mul(slice_cols(pos_g, 1, 2), tape.constant(std::move(m))));
}

Var inertia_term(Var x_next, const Positions& x_curr, const Positions& q_curr, const std::vector<double>& masses,
                 double dt) {
    Tape& tape = *x_next.tape;
    Positions inertial(x_curr.size());
    for (std::size_t i = 0; i < x_curr.size(); ++i) inertial[i] = x_curr[i] + q_curr[i] * dt;
    Tensor w = Tensor::matrix(masses.size(), 1);
    for (std::size_t i = 0; i < masses.size(); ++i) w[i] = masses[i] / (2.0 * dt * dt);
    Var dev = sub(x_next, tape.constant(positions_tensor(inertial)));
    return sum(mul(dot_rows(dev, dev), tape.constant(std::move(w))));
}

std::vector<BodyContact> friction_contacts(const std::vector<BodyContact>& contacts, const Positions& garment_pos,
                                           const Positions& body_pos, const Positions& body_normals, double margin) {
    std::vector<BodyContact> out;
    for (const auto& c : contacts) {
        if (dot(garment_pos[c.garment] - body_pos[c.body], body_normals[c.body]) < margin) out.push_back(c);
    }
    return out;
}

Var friction_term(Var x_next, const Positions& x_curr, const Positions& body_normals,
                  const std::vector<BodyContact>& contacts, const std::vector<double>& masses, double mu,
                  double dt, double huber_delta) {
    Tape& tape = *x_next.tape;
    if (contacts.empty()) return tape.constant(Tensor::scalar(0.0));
    Var moved = sub(gather_rows(x_next, garment_ids(contacts)), tape.constant(contact_rows(contacts, x_curr, false)));
    Var n = tape.constant(contact_rows(contacts, body_normals, true));
    Var tangential = sub(moved, mul_col(n, dot_rows(moved, n)));
    Var slide = huber_from_squared(dot_rows(tangential, tangential), huber_delta);
    Tensor w = Tensor::matrix(contacts.size(), 1);
    for (std::size_t k = 0; k < contacts.size(); ++k) w[k] = mu * masses[contacts[k].garment] / dt;
    return sum(mul(slide, tape.constant(std::move(w))));
}

double max_penetration(const Positions& garment_pos, const Positions& body_pos, const Positions& body_normals,
                       const std::vector<BodyContact>& contacts) {
    double worst = 0.0;
    for (const auto& c : contacts) {
        const double d = dot(garment_pos[c.garment] - body_pos[c.body], body_normals[c.body]);
        worst = std::max(worst, -d);
    }
    return worst;
}

LossTerms total_loss(Var x_next, const LossInputs& in, const PhysicsConfig& cfg, const LossWeights& w) {
    const auto& masses = in.rest->vertex_masses;
    LossTerms t;
    t.stretch = stretch_energy(x_next, *in.topology, *in.rest, cfg.stretch_stiffness);
    t.bending = bending_energy(x_next, *in.topology, *in.rest, cfg.bending_stiffness);
    t.collision = collision_penalty(x_next, in.body_next, in.body_normals_next, in.contacts, cfg.collision_margin,
                                    cfg.collision_stiffness);
    t.gravity = gravity_energy(x_next, masses, cfg.gravity);
    t.inertia = inertia_term(x_next, in.x_curr, in.q_curr, masses, cfg.dt);
    const auto touching =
        friction_contacts(in.contacts, in.x_curr, in.body_curr, in.body_normals_curr, cfg.collision_margin);
    t.friction = friction_term(x_next, in.x_curr, in.body_normals_curr, touching, masses, cfg.friction, cfg.dt,
                               cfg.huber_delta);
    t.total = add(add(add(scale(t.stretch, w.stretch), scale(t.bending, w.bending)),
                      add(scale(t.collision, w.collision), scale(t.gravity, w.gravity))),
                  add(scale(t.inertia, w.inertia), scale(t.friction, w.friction)));
    return t;
}

LossValues values_of(const LossTerms& t) {
    return {t.stretch.value().item(), t.bending.value().item(), t.collision.value().item(),
            t.gravity.value().item(), t.inertia.value().item(), t.friction.value().item(),
            t.total.value().item()};
}

double weighted_total(const LossValues& v, const LossWeights& w) {
    return w.stretch * v.stretch + w.bending * v.bending + w.collision * v.collision + w.gravity * v.gravity +
           w.inertia * v.inertia + w.friction * v.friction;
}

std::string loss_formula_legend() {
    return "# stretch   = sum_edges (k_s/2) (|x_i-x_j| - L)^2 / L\n"
           "# bending   = sum_hinges (k_b/2) (theta - theta_rest)^2\n"
           "# inertia   = sum_i m_i/(2 dt^2) |x_next - (x + dt q)|^2\n"
           "# collision = sum_contacts k_c max(0, eps - (x_g - x_b).n_b)^3\n"
           "# friction  = mu sum_contacts m_i huber(|tangential dx|) / dt\n"
           "# gravity   = sum_i m_i g y_i\n"
           "# total     = weighted sum of the six terms\n";
}

}  // namespace eslr
