#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "expertad/scenario.hpp"

namespace expertad {

nlohmann::json scenario_config_to_json(const ScenarioConfig& config);
/// Strict: unknown keys are rejected.
ScenarioConfig scenario_config_from_json(const nlohmann::json& j);

std::vector<char> encode_scenario(const Scenario& sc);
Scenario decode_scenario(const std::vector<char>& blob);

struct ScenarioSet {
  ScenarioConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<Scenario> scenarios;
};

/// Generates `seeds` and writes scenario_NNNNN.bin blobs plus manifest.json.
void write_scenario_set(const std::string& dir, const ScenarioConfig& config,
                        const std::vector<std::uint64_t>& seeds);
ScenarioSet load_scenario_set(const std::string& dir);

/// Seeds used by `gen`: a pure function of (base seed, count).
std::vector<std::uint64_t> scenario_seeds(std::uint64_t base_seed, std::size_t count);

}  // namespace expertad
