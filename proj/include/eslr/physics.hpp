#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "eslr/mesh.hpp"
#include "eslr/tensor.hpp"

namespace eslr {

struct PhysicsConfig {
    double stretch_stiffness = 20.0;    // N/m
    double bending_stiffness = 1e-3;    // N*m
    double collision_margin = 5e-3;     // m
    double collision_stiffness = 10.0;
    double gravity = 9.81;              // m/s^2 along -y
    double friction = 0.3;
    double dt = 1.0 / 30.0;             // s
    double density = 0.2;               // kg/m^2
    double huber_delta = 1e-6;          // m
};

struct LossWeights {
    double stretch = 1.0;
    double bending = 1.0;
    double collision = 30.0;
    double gravity = 1.0;
    double inertia = 1.0;
    double friction = 0.5;
};

void validate(const PhysicsConfig& cfg);

Tensor positions_tensor(const Positions& pos);
Positions positions_from(const Tensor& t);

/// sum over edges of (k_s/2) (|x_i - x_j| - L)^2 / L
Var stretch_energy(Var pos, const Topology& topo, const RestState& rest, double k_s);

/// sum over interior edges of (k_b/2) (theta - theta_rest)^2. Pairs whose
/// current triangles or hinge edge are degenerate contribute zero and are
/// counted in `degenerate`.
Var bending_energy(Var pos, const Topology& topo, const RestState& rest, double k_b,
                   std::size_t* degenerate = nullptr);

/// (garment vertex, body vertex) with the body vertex's unit normal.
struct BodyContact {
    std::uint32_t garment;
    std::uint32_t body;
};

/// The closest world-edge partner of every garment vertex that has one
/// (ties go to the lower body index).
std::vector<BodyContact> nearest_body_contacts(const WorldEdgeSet& edges, const Positions& garment_pos,
                                               const Positions& body_pos);

/// sum over contacts of k_c * max(0, eps - (x_g - x_b) . n_b)^3
Var collision_penalty(Var pos_g, const Positions& body_pos, const Positions& body_normals,
                      const std::vector<BodyContact>& contacts, double margin, double k_c);

/// sum of m_i * g * y_i, signed.
Var gravity_energy(Var pos_g, const std::vector<double>& masses, double g);

/// sum of m_i / (2 dt^2) |x_next - (x + dt q)|^2
Var inertia_term(Var x_next, const Positions& x_curr, const Positions& q_curr, const std::vector<double>& masses,
                 double dt);

/// Contacts whose normal distance at the current positions is below the margin.
std::vector<BodyContact> friction_contacts(const std::vector<BodyContact>& contacts, const Positions& garment_pos,
                                           const Positions& body_pos, const Positions& body_normals, double margin);

/// mu * sum over contacts of m_i * huber(|tangential part of (x_next - x_curr)|) / dt
Var friction_term(Var x_next, const Positions& x_curr, const Positions& body_normals,
                  const std::vector<BodyContact>& contacts, const std::vector<double>& masses, double mu,
                  double dt, double huber_delta);

/// Deepest penetration below the tangent plane of the nearest body vertex
/// (0 when nothing penetrates).
double max_penetration(const Positions& garment_pos, const Positions& body_pos, const Positions& body_normals,
                       const std::vector<BodyContact>& contacts);

struct LossInputs {
    const Topology* topology = nullptr;
    const RestState* rest = nullptr;
    Positions x_curr;
    Positions q_curr;
    Positions body_next;
    Positions body_normals_next;
    Positions body_normals_curr;
    Positions body_curr;
    std::vector<BodyContact> contacts;
};

struct LossTerms {
    Var stretch, bending, collision, gravity, inertia, friction, total;
};

struct LossValues {
    double stretch = 0, bending = 0, collision = 0, gravity = 0, inertia = 0, friction = 0, total = 0;
};

LossTerms total_loss(Var x_next, const LossInputs& in, const PhysicsConfig& cfg, const LossWeights& w);

LossValues values_of(const LossTerms& terms);

double weighted_total(const LossValues& v, const LossWeights& w);

/// Formula legend printed in reports.
std::string loss_formula_legend();

}  // namespace eslr
