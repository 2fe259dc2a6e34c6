#include "expertad/config.hpp"

#include <fstream>
#include <set>

#include "expertad/error.hpp"
#include "expertad/scenario_io.hpp"

namespace expertad {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, const std::set<std::string>& known) {
  require(j.is_object(), ErrorKind::config, where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    require(known.count(key) == 1, ErrorKind::config, where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void RunConfig::validate() const {
  scenario.validate();
  const auto d = scenario.d;
  require(model.heads >= 1 && d % model.heads == 0, ErrorKind::config, "model.heads must divide d");
  require(model.expert_len >= 1, ErrorKind::config, "model.expert_len must be >= 1");
  require(model.expert_len <= scenario.H && model.expert_len <= scenario.W, ErrorKind::config,
          "model.expert_len must not exceed the BEV height or width");
  require(model.agent_queries >= 1 && model.map_queries >= 1, ErrorKind::config,
          "model.agent_queries and model.map_queries must be >= 1");
  require(model.planner_hidden >= 1, ErrorKind::config, "model.planner_hidden must be >= 1");
  require(scenario.horizon >= 6, ErrorKind::config, "scenario.horizon must be >= 6 for the l2 metrics");
  require(scenario.obstacle_count >= 1, ErrorKind::config, "scenario.obstacle_count must be >= 1");

  require(patterns.block_m >= 1 && patterns.window_w >= 1 && patterns.topk_k >= 1, ErrorKind::config,
          "pattern parameters must be >= 1");
  require(patterns.topk_k <= model.expert_len, ErrorKind::config, "patterns.topk_k must not exceed model.expert_len");

  require(router.experts == 8, ErrorKind::config, "router.experts must equal the bank size (8)");
  require(router.k >= 1 && router.k <= router.experts, ErrorKind::config, "router.k must lie in [1, experts]");
  require(router.eps_noise > 0.0, ErrorKind::config, "router.eps_noise must be > 0");

  require(adapter.tau > 0.0 && adapter.tau < static_cast<double>(d), ErrorKind::config,
          "adapter.tau must lie in (0, d)");
  require(adapter.eps_entropy > 0.0, ErrorKind::config, "adapter.eps_entropy must be > 0");

  const double a[] = {loss.alpha1, loss.alpha2, loss.alpha3, loss.alpha4};
  bool any = false;
  for (double v : a) {
    require(v >= 0.0, ErrorKind::config, "loss weights must be >= 0");
    any = any || v > 0.0;
  }
  require(any, ErrorKind::config, "loss weights must not all be zero");

  require(optimizer.lr > 0.0, ErrorKind::config, "optimizer.lr must be > 0");
  require(optimizer.batch >= 1, ErrorKind::config, "optimizer.batch must be >= 1");
  require(optimizer.epochs >= 1, ErrorKind::config, "optimizer.epochs must be >= 1");
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  return {
      {"seed", c.seed},
      {"scenario", scenario_config_to_json(c.scenario)},
      {"model",
       {{"heads", c.model.heads},
        {"expert_len", c.model.expert_len},
        {"agent_queries", c.model.agent_queries},
        {"map_queries", c.model.map_queries},
        {"planner_hidden", c.model.planner_hidden},
        {"dense_baseline", c.model.dense_baseline}}},
      {"patterns",
       {{"block_m", c.patterns.block_m}, {"window_w", c.patterns.window_w}, {"topk_k", c.patterns.topk_k}}},
      {"router",
       {{"experts", c.router.experts},
        {"k", c.router.k},
        {"eps_noise", c.router.eps_noise},
        {"renormalize_topk", c.router.renormalize_topk},
        {"freeze", c.router.freeze}}},
      {"adapter", {{"tau", c.adapter.tau}, {"eps_entropy", c.adapter.eps_entropy}}},
      {"loss",
       {{"alpha1", c.loss.alpha1}, {"alpha2", c.loss.alpha2}, {"alpha3", c.loss.alpha3}, {"alpha4", c.loss.alpha4}}},
      {"optimizer", {{"lr", c.optimizer.lr}, {"epochs", c.optimizer.epochs}, {"batch", c.optimizer.batch}}},
  };
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  check_keys(j, "config", {"seed", "scenario", "model", "patterns", "router", "adapter", "loss", "optimizer"});
  RunConfig c;
  try {
    read(j, "seed", c.seed);
    if (j.contains("scenario")) c.scenario = scenario_config_from_json(j.at("scenario"));
    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m, "model", {"heads", "expert_len", "agent_queries", "map_queries", "planner_hidden", "dense_baseline"});
      read(m, "heads", c.model.heads);
      read(m, "expert_len", c.model.expert_len);
      read(m, "agent_queries", c.model.agent_queries);
      read(m, "map_queries", c.model.map_queries);
      read(m, "planner_hidden", c.model.planner_hidden);
      read(m, "dense_baseline", c.model.dense_baseline);
    }
    if (j.contains("patterns")) {
      const auto& p = j.at("patterns");
      check_keys(p, "patterns", {"block_m", "window_w", "topk_k"});
      read(p, "block_m", c.patterns.block_m);
      read(p, "window_w", c.patterns.window_w);
      read(p, "topk_k", c.patterns.topk_k);
    }
    if (j.contains("router")) {
      const auto& r = j.at("router");
      check_keys(r, "router", {"experts", "k", "eps_noise", "renormalize_topk", "freeze"});
      read(r, "experts", c.router.experts);
      read(r, "k", c.router.k);
      read(r, "eps_noise", c.router.eps_noise);
      read(r, "renormalize_topk", c.router.renormalize_topk);
      read(r, "freeze", c.router.freeze);
    }
    if (j.contains("adapter")) {
      const auto& a = j.at("adapter");
      check_keys(a, "adapter", {"tau", "eps_entropy"});
      read(a, "tau", c.adapter.tau);
      read(a, "eps_entropy", c.adapter.eps_entropy);
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      check_keys(l, "loss", {"alpha1", "alpha2", "alpha3", "alpha4"});
      read(l, "alpha1", c.loss.alpha1);
      read(l, "alpha2", c.loss.alpha2);
      read(l, "alpha3", c.loss.alpha3);
      read(l, "alpha4", c.loss.alpha4);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      check_keys(o, "optimizer", {"lr", "epochs", "batch"});
      read(o, "lr", c.optimizer.lr);
      read(o, "epochs", c.optimizer.epochs);
      read(o, "batch", c.optimizer.batch);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace expertad
