#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "softnet/state.hpp"

namespace softnet {

inline constexpr const char* kCheckpointFormat = "softnet-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Network (weights, biases, scores, capacity, mode, frozen masks and the
/// minor seed) plus the prototype store and base classes. Doubles are
/// written in shortest round-trip form, so payloads reload bit-exactly.
nlohmann::json checkpoint_to_json(const TrainedState& state);
TrainedState checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const TrainedState& state);
TrainedState load_checkpoint(const std::filesystem::path& path);

}  // namespace softnet
