#pragma once

#include <cstdint>
#include <string>

#include "expertad/expert_bank.hpp"
#include "expertad/scenario.hpp"
#include "json.hpp"

namespace expertad {

struct LossWeights {
  double alpha1 = 0.5;   // perception
  double alpha2 = 0.5;   // prediction
  double alpha3 = 1.0;   // planning
  double alpha4 = 0.01;  // switch
};

struct ModelConfig {
  std::size_t heads = 4;
  std::size_t expert_len = 8;  // L_e, shared by all experts
  std::size_t agent_queries = 3;
  std::size_t map_queries = 2;
  std::size_t planner_hidden = 64;
  bool dense_baseline = false;  // dense_reference kernels for every expert
};

struct RouterConfig {
  std::size_t experts = 8;
  std::size_t k = 4;
  double eps_noise = 1e-2;
  bool renormalize_topk = false;
  bool freeze = false;  // initial gate, noise-free, never updated (random-router baseline)
};

struct AdapterConfig {
  double tau = 8.0;
  double eps_entropy = 0.1;
};

struct OptimizerConfig {
  double lr = 1e-2;
  std::size_t epochs = 50;
  std::size_t batch = 4;
};

struct RunConfig {
  ScenarioConfig scenario;
  ModelConfig model;
  PatternDefaults patterns;
  RouterConfig router;
  AdapterConfig adapter;
  LossWeights loss;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;

  /// Throws ErrorKind::config on any violated constraint.
  void validate() const;
  std::size_t query_length() const { return model.agent_queries + model.map_queries + 1; }
};

nlohmann::json run_config_to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace expertad
