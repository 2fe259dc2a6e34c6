#include "expertad/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "expertad/error.hpp"

namespace expertad {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void accumulate(LossBreakdown& acc, const LossBreakdown& b, double weight) {
  acc.perception += weight * b.perception;
  acc.prediction += weight * b.prediction;
  acc.planning += weight * b.planning;
  acc.switch_loss += weight * b.switch_loss;
  acc.total += weight * b.total;
}

std::vector<PreparedScenario> prepare_all(const ScenarioSet& data) {
  std::vector<PreparedScenario> prep;
  prep.reserve(data.scenarios.size());
  for (const auto& sc : data.scenarios) prep.push_back(prepare_scenario(sc));
  return prep;
}

}  // namespace

void check_data_matches(const RunConfig& config, const ScenarioConfig& data) {
  const auto& c = config.scenario;
  require(c.T == data.T && c.d == data.d && c.H == data.H && c.W == data.W && c.horizon == data.horizon &&
              c.planted_channels == data.planted_channels && c.obstacle_count == data.obstacle_count,
          ErrorKind::shape, "scenario manifest dimensions differ from the model config");
}

TrainResult train(const RunConfig& config, const ScenarioSet& data, const TrainOptions& options) {
  return train_model(init_model(config), data, options);
}

TrainResult train_model(Model model, const ScenarioSet& data, const TrainOptions& options) {
  const RunConfig& cfg = model.config;
  check_data_matches(cfg, data.config);
  require(!data.scenarios.empty(), ErrorKind::shape, "train: empty scenario set");
  TrainResult result;
  if (options.run_op_checks) {
    result.op_checks = check_learnable_ops(cfg.seed);
    for (const auto& c : result.op_checks) {
      require(c.report.passed, ErrorKind::numerical,
              "gradient check failed for op '" + c.name + "' (relative error " +
                  fmt(c.report.max_relative_error) + ")");
    }
  }

  const auto prep = prepare_all(data);
  const std::size_t n = prep.size();
  const RandomStream shuffle = seeded_stream(cfg.seed, "shuffle");
  const RandomStream noise_root = seeded_stream(cfg.seed, "router-noise");
  // A frozen router is a fixed routing function: no updates and no gate noise.
  const GateMode gate_mode = cfg.router.freeze ? GateMode::eval : GateMode::train;
  for (std::size_t epoch = 1; epoch <= cfg.optimizer.epochs; ++epoch) {
    RandomStream order_rng = shuffle.fork(epoch);
    const std::vector<std::size_t> order = order_rng.permutation(n);
    const RandomStream epoch_noise = noise_root.fork(epoch);
    CurveRecord rec;
    rec.epoch = epoch;
    Vec f_sum = Vec::Zero(static_cast<Eigen::Index>(cfg.router.experts));
    Vec P_sum = f_sum;
    for (std::size_t start = 0; start < n; start += cfg.optimizer.batch) {
      const std::size_t end = std::min(n, start + cfg.optimizer.batch);
      std::vector<const PreparedScenario*> batch;
      std::vector<RandomStream> noise;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&prep[order[i]]);
        noise.push_back(epoch_noise.fork(order[i]));
      }
      ParamStore grads = zeros_like(model.params);
      const BatchResult res = run_batch(model, batch, gate_mode, noise, &grads);
      const double B = static_cast<double>(batch.size());
      accumulate(rec.loss, res.loss, B / static_cast<double>(n));
      f_sum += B * res.stats.f;
      P_sum += B * res.stats.P;
      for (auto& [name, value] : model.params) {
        if (cfg.router.freeze && is_router_param(name)) continue;
        value.noalias() -= cfg.optimizer.lr * grads.at(name);
      }
    }
    rec.stats.f = f_sum / static_cast<double>(n);
    rec.stats.P = P_sum / static_cast<double>(n);
    if (options.on_epoch) options.on_epoch(rec);
    result.curves.push_back(std::move(rec));
  }
  result.model = std::move(model);
  return result;
}

std::string curves_csv(const std::vector<CurveRecord>& curves, std::size_t experts) {
  std::ostringstream os;
  os << "epoch,perception,prediction,planning,switch,total";
  for (std::size_t i = 1; i <= experts; ++i) os << ",f_" << i;
  for (std::size_t i = 1; i <= experts; ++i) os << ",P_" << i;
  os << '\n';
  for (const auto& r : curves) {
    os << r.epoch << ',' << fmt(r.loss.perception) << ',' << fmt(r.loss.prediction) << ',' << fmt(r.loss.planning)
       << ',' << fmt(r.loss.switch_loss) << ',' << fmt(r.loss.total);
    for (Eigen::Index i = 0; i < r.stats.f.size(); ++i) os << ',' << fmt(r.stats.f[i]);
    for (Eigen::Index i = 0; i < r.stats.P.size(); ++i) os << ',' << fmt(r.stats.P[i]);
    os << '\n';
  }
  return os.str();
}

EvalMetrics aggregate_metrics(const std::vector<const Scenario*>& scenarios,
                              const std::vector<std::vector<Point2>>& trajectories) {
  require(!scenarios.empty() && scenarios.size() == trajectories.size(), ErrorKind::shape,
          "aggregate_metrics: need one trajectory per scenario");
  EvalMetrics m;
  m.scenarios = scenarios.size();
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const auto& gt = scenarios[s]->gt_future;
    const auto& tr = trajectories[s];
    require(tr.size() == gt.size() && gt.size() >= kL2Steps.back(), ErrorKind::shape,
            "aggregate_metrics: trajectories must cover the horizon");
    for (std::size_t h = 0; h < kL2Steps.size(); ++h) {
      const std::size_t i = kL2Steps[h] - 1;
      m.l2_at_h[h] += std::hypot(tr[i].x - gt[i].x, tr[i].y - gt[i].y);
    }
    m.collision_rate += collision_check(tr, scenarios[s]->obstacles, kEgoRadius);
  }
  const double n = static_cast<double>(scenarios.size());
  for (double& v : m.l2_at_h) v /= n;
  m.collision_rate /= n;
  m.avg_l2 = (m.l2_at_h[0] + m.l2_at_h[1] + m.l2_at_h[2]) / 3.0;
  return m;
}

EvalMetrics evaluate(const Model& model, const ScenarioSet& data) {
  check_data_matches(model.config, data.config);
  require(!data.scenarios.empty(), ErrorKind::shape, "evaluate: empty scenario set");
  std::vector<const Scenario*> scenarios;
  std::vector<std::vector<Point2>> trajectories;
  FlopTrace trace;
  double elapsed_ms = 0.0;
  RandomStream unused = seeded_stream(model.config.seed, "eval");
  for (const auto& sc : data.scenarios) {
    const PreparedScenario prep = prepare_scenario(sc);
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioOutput o = forward_scenario(model, prep, GateMode::eval, unused, nullptr, &trace);
    elapsed_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& p : o.trajectory) {
      require(std::isfinite(p.x) && std::isfinite(p.y), ErrorKind::numerical, "evaluate: non-finite trajectory");
    }
    scenarios.push_back(&sc);
    trajectories.push_back(std::move(o.trajectory));
  }
  EvalMetrics m = aggregate_metrics(scenarios, trajectories);
  m.expert_flops = flop_ledger(trace.records());
  m.wall_time_ms = elapsed_ms / static_cast<double>(data.scenarios.size());
  return m;
}

nlohmann::json eval_report(const EvalMetrics& m, const RunConfig& config) {
  nlohmann::json l2;
  for (std::size_t h = 0; h < kL2Steps.size(); ++h) l2[std::to_string(kL2Steps[h])] = m.l2_at_h[h];
  return {{"config", run_config_to_json(config)},
          {"seed", config.seed},
          {"scenarios", m.scenarios},
          {"l2_at_h", l2},
          {"avg_l2", m.avg_l2},
          {"collision_rate", m.collision_rate},
          {"expert_flops",
           {{"multiply_adds", m.expert_flops.multiply_adds},
            {"exponentials", m.expert_flops.exponentials},
            {"total", m.expert_flops.total()}}},
          {"timing", {{"wall_time_ms_per_forward", m.wall_time_ms}}}};
}

RouteStats route_stats(const Model& model, const ScenarioSet& data) {
  check_data_matches(model.config, data.config);
  require(!data.scenarios.empty(), ErrorKind::shape, "route_stats: empty scenario set");
  RouteStats out;
  std::vector<RoutingDecision> decisions;
  RandomStream unused = seeded_stream(model.config.seed, "eval");
  for (const auto& sc : data.scenarios) {
    const PreparedScenario prep = prepare_scenario(sc);
    decisions.push_back(forward_scenario(model, prep, GateMode::eval, unused).decision);
    out.selections.push_back(decisions.back().selected);
  }
  out.stats = utilization_stats(decisions);
  out.switch_value = switch_loss(out.stats);
  return out;
}

}  // namespace expertad
