#include "eslr/body.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "eslr/error.hpp"
#include "eslr/rng.hpp"

namespace eslr {

BodyPreset parse_body_preset(const std::string& name) {
    if (name == "static_sphere") return BodyPreset::static_sphere;
    if (name == "swinging_capsule") return BodyPreset::swinging_capsule;
    if (name == "translating_capsule") return BodyPreset::translating_capsule;
    throw ValidationError("unknown body preset '" + name +
                          "' (expected static_sphere, swinging_capsule or translating_capsule)");
}

std::string to_string(BodyPreset preset) {
    switch (preset) {
        case BodyPreset::static_sphere:
            return "static_sphere";
        case BodyPreset::swinging_capsule:
            return "swinging_capsule";
        case BodyPreset::translating_capsule:
            return "translating_capsule";
    }
    return "unknown";
}

BodyModel make_body(const BodyMotion& motion) {
    BodyModel body;
    body.motion = motion;
    if (motion.preset == BodyPreset::static_sphere) {
        body.rest = make_icosphere({0, 0, 0}, 0.3, 2);
    } else {
        body.rest = make_capsule({0, 0, 0}, 0.15, 0.35, 4, 12);
    }
    if (motion.preset == BodyPreset::swinging_capsule) {
        Rng rng(motion.seed);
        body.phase = 2.0 * std::numbers::pi * rng.uniform();
    }
    return body;
}

BodyFrame body_motion_eval(const BodyModel& body, double t) {
    if (!(t >= 0.0)) throw ValidationError("body time must be non-negative");
    const Positions& rest = body.rest.vertices;
    BodyFrame f{rest, Positions(rest.size())};
    const auto& m = body.motion;
    switch (m.preset) {
        case BodyPreset::static_sphere:
            break;
        case BodyPreset::translating_capsule: {
            const Vec3 v{m.amplitude, 0.0, 0.0};
            for (std::size_t i = 0; i < rest.size(); ++i) {
                f.positions[i] = rest[i] + v * t;
                f.velocities[i] = v;
            }
            break;
        }
        case BodyPreset::swinging_capsule: {
            // rotation about +y by theta(t) = A sin(2 pi f t + phase)
            const double w = 2.0 * std::numbers::pi * m.frequency;
            const double theta = m.amplitude * std::sin(w * t + body.phase);
            const double theta_dot = m.amplitude * w * std::cos(w * t + body.phase);
            const double c = std::cos(theta), s = std::sin(theta);
            for (std::size_t i = 0; i < rest.size(); ++i) {
                const Vec3& p = rest[i];
                const Vec3 r{c * p.x + s * p.z, p.y, -s * p.x + c * p.z};
                f.positions[i] = r;
                f.velocities[i] = cross(Vec3{0, 1, 0}, r) * theta_dot;
            }
            break;
        }
    }
    return f;
}

double body_apex(const BodyModel& body) {
    double top = -INFINITY;
    for (const auto& v : body.rest.vertices) top = std::max(top, v.y);
    return top;
}

}  // namespace eslr
