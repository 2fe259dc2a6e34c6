#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "expertad/config.hpp"
#include "expertad/expert_bank.hpp"
#include "expertad/flops.hpp"
#include "expertad/losses.hpp"
#include "expertad/moe_router.hpp"
#include "expertad/perception_adapter.hpp"
#include "expertad/scenario.hpp"

namespace expertad {

/// Named parameter groups; iteration order (lexicographic) is the canonical
/// order for serialisation and gradient reduction.
using ParamStore = std::map<std::string, Mat>;

inline constexpr std::array<const char*, 2> kTaskNames = {"tracking", "mapping"};

struct Model {
  RunConfig config;
  std::vector<ExpertSpec> bank;
  ParamStore params;
};

/// Fresh parameters drawn from the "init" stream of config.seed.
Model init_model(const RunConfig& config);
/// Zero-filled store with the same shapes.
ParamStore zeros_like(const ParamStore& params);

/// Parameter-independent inputs computed once per scenario.
struct PreparedScenario {
  const Scenario* scenario = nullptr;
  Mat tokens;  // (H*W) x d, standardised then averaged over T
  Vec means;   // channel means of `tokens`
  Mat clean;   // (H*W) x d, clean signal under the same standardisation
};

PreparedScenario prepare_scenario(const Scenario& sc);

struct TaskCache {
  Vec s;
  SelectionWeights selection;
  AlignCache align;
  Mat aligned;  // (H*W) x d
  StubHeadCache head;
  Mat head_out;
};

struct ExpertCache {
  std::size_t expert = 0;
  RawModality raw;
  EmbeddingCache embedding_cache;
  Mat embedding;
  std::vector<AttentionCache> attention;
  Mat out;
};

struct ForwardCache {
  std::array<TaskCache, 2> tasks;
  Mat ego;  // L x d
  GateCache gate;
  RoutingDecision decision;
  std::vector<ExpertCache> experts;  // one per selected slot
  Mat motion;
  RowVec motion_mean;  // mean over motion query rows
  double pooled_scale = 1.0;
  RowVec pooled;      // motion_mean layer-normalised
  RowVec hidden;
  RowVec plan;        // 1 x 2*horizon
  Vec next_state;     // x, y, yaw, v
};

struct ScenarioOutput {
  std::vector<Point2> trajectory;
  Vec next_state;
  double perception = 0.0;
  double prediction = 0.0;
  double planning = 0.0;
  RoutingDecision decision;
};

/// One scenario through adapter, stub heads, experts, router, and heads.
/// Expert primitives are appended to `expert_trace` when given.
ScenarioOutput forward_scenario(const Model& model, const PreparedScenario& prep, GateMode mode,
                                RandomStream& noise, ForwardCache* cache = nullptr,
                                FlopTrace* expert_trace = nullptr);

struct BatchResult {
  LossBreakdown loss;
  LoadStats stats;
  std::vector<ScenarioOutput> outputs;
};

/// Forward over a batch, weighted total loss, and (when `grads` is given) the
/// gradient of the total accumulated in scenario order. `noise[b]` is the
/// router-noise stream of example b.
BatchResult run_batch(const Model& model, const std::vector<const PreparedScenario*>& batch, GateMode mode,
                      std::vector<RandomStream>& noise, ParamStore* grads = nullptr);

/// Parameter groups that belong to the router gate.
bool is_router_param(const std::string& name);

}  // namespace expertad
