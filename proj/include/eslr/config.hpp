#pragma once

#include <string>

#include <json.hpp>

#include "eslr/geodesic.hpp"
#include "eslr/model.hpp"
#include "eslr/physics.hpp"
#include "eslr/sim.hpp"
#include "eslr/trainer.hpp"

namespace eslr {

/// Every knob of a run. Serialized as JSON with sections
/// mesh / geodesic / model / physics / weights / sim / train.
struct RunConfig {
    MdsOptions mds;
    ModelConfig model;
    PhysicsConfig physics;
    LossWeights weights;
    SimConfig sim;
    TrainConfig train;
};

/// Missing keys keep their defaults; unknown keys and wrong types throw
/// ValidationError naming the offending key.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);

RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

/// Cross-field checks (positive sizes, embed dims match, ...).
void validate(const RunConfig& cfg);

/// The reference scenario: a 10x10 grid over a static sphere.
RunConfig desk_config();

}  // namespace eslr
