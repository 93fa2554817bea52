#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "isaccal/trainer.hpp"

namespace isaccal {

inline constexpr int kCheckpointVersion = 1;

/// Everything needed to rebuild a model or resume its training. The data RNG is
/// counter based, so (data_seed, state.iteration) is its full state.
struct Checkpoint {
  nlohmann::json config;
  std::string config_hash;
  std::string method; // matched, mismatched, ul, slcb, slcb-perturbed
  std::uint64_t impairment_seed = 0;
  std::uint64_t data_seed = 0;
  TrainState state;
};

nlohmann::json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

} // namespace isaccal
