#pragma once

#include <cstdint>
#include <string>

#include "eslr/mesh.hpp"

namespace eslr {

enum class BodyPreset { static_sphere, swinging_capsule, translating_capsule };

BodyPreset parse_body_preset(const std::string& name);
std::string to_string(BodyPreset preset);

/// Procedural stand-in for an animated avatar. `amplitude` is the swing
/// angle in radians for swinging_capsule and the speed in m/s for
/// translating_capsule; `seed` picks the swing phase.
struct BodyMotion {
    BodyPreset preset = BodyPreset::static_sphere;
    double amplitude = 0.0;
    double frequency = 0.5;
    std::uint64_t seed = 0;
};

struct BodyModel {
    BodyMotion motion;
    Mesh rest;
    double phase = 0.0;
};

/// Sphere: radius 0.3 m icosphere (162 vertices) at the origin. Capsule:
/// radius 0.15 m, half length 0.35 m, axis along z, at the origin.
BodyModel make_body(const BodyMotion& motion);

struct BodyFrame {
    Positions positions;
    Positions velocities;
};

/// Closed-form positions and their exact time derivative.
BodyFrame body_motion_eval(const BodyModel& body, double t);

/// Highest point of the body rest mesh.
double body_apex(const BodyModel& body);

}  // namespace eslr
