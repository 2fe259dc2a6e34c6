#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "expertad/checks.hpp"
#include "expertad/flops.hpp"
#include "expertad/model.hpp"
#include "expertad/scenario_io.hpp"

namespace expertad {

struct CurveRecord {
  std::size_t epoch = 0;
  LossBreakdown loss;  // example-weighted means over the epoch's batches
  LoadStats stats;     // over every routing decision of the epoch
};

struct TrainResult {
  Model model;
  std::vector<CurveRecord> curves;
  std::vector<NamedReport> op_checks;
};

struct TrainOptions {
  bool run_op_checks = true;
  std::function<void(const CurveRecord&)> on_epoch;
};

/// Minibatch SGD on the weighted total loss. Learnable-op backward passes are gradient
/// checked first; a failure aborts with ErrorKind::numerical.
TrainResult train(const RunConfig& config, const ScenarioSet& data, const TrainOptions& options = {});

/// Continues from an existing model (used by tests).
TrainResult train_model(Model model, const ScenarioSet& data, const TrainOptions& options = {});

std::string curves_csv(const std::vector<CurveRecord>& curves, std::size_t experts);

inline constexpr std::array<std::size_t, 3> kL2Steps = {2, 4, 6};
inline constexpr double kEgoRadius = 1.0;

struct EvalMetrics {
  std::array<double, 3> l2_at_h{};  // steps kL2Steps
  double avg_l2 = 0.0;
  double collision_rate = 0.0;
  FlopCount expert_flops;  // summed over the manifest
  double wall_time_ms = 0.0;  // per forward
  std::size_t scenarios = 0;
};

/// Noise-free forward over the manifest.
EvalMetrics evaluate(const Model& model, const ScenarioSet& data);

/// Aggregates given trajectories (same order as `scenarios`).
EvalMetrics aggregate_metrics(const std::vector<const Scenario*>& scenarios,
                              const std::vector<std::vector<Point2>>& trajectories);

/// Report with the resolved config and seed; timing lives under "timing".
nlohmann::json eval_report(const EvalMetrics& m, const RunConfig& config);

struct RouteStats {
  LoadStats stats;
  double switch_value = 0.0;
  std::vector<std::vector<std::size_t>> selections;  // B x k
};

RouteStats route_stats(const Model& model, const ScenarioSet& data);

/// Throws ErrorKind::shape when the manifest's dimensions differ from the model's.
void check_data_matches(const RunConfig& config, const ScenarioConfig& data);

}  // namespace expertad
