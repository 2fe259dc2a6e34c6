#include <gtest/gtest.h>

#include <cmath>

#include "expertad/checkpoint.hpp"
#include "expertad/checks.hpp"
#include "expertad/config.hpp"
#include "expertad/error.hpp"
#include "expertad/losses.hpp"
#include "expertad/model.hpp"
#include "expertad/scenario_io.hpp"
#include "expertad/trainer.hpp"

using namespace expertad;

namespace {

RunConfig small_config() {
  RunConfig c;
  c.scenario.d = 16;
  c.scenario.H = 8;
  c.scenario.W = 8;
  c.scenario.planted_channels = 2;
  c.adapter.tau = 2;
  c.model.planner_hidden = 16;
  c.optimizer.epochs = 3;
  c.optimizer.batch = 4;
  c.seed = 11;
  return c;
}

ScenarioSet make_set(const ScenarioConfig& cfg, std::uint64_t base, std::size_t n) {
  ScenarioSet s;
  s.config = cfg;
  s.seeds = scenario_seeds(base, n);
  for (auto seed : s.seeds) s.scenarios.push_back(generate_scenario(cfg, seed));
  return s;
}

TrainOptions quiet() {
  TrainOptions o;
  o.run_op_checks = false;
  return o;
}

}  // namespace

TEST(SwitchLoss, SpecValues) {
  EXPECT_EQ(switch_loss({Vec::Constant(8, 0.125), Vec::Constant(8, 0.125)}), 1.0);
  Vec one = Vec::Zero(8);
  one[2] = 1.0;
  EXPECT_EQ(switch_loss({one, one}), 8.0);
  EXPECT_NEAR(switch_loss({Vec{{0.5, 0.5, 0, 0}}, Vec{{0.4, 0.4, 0.1, 0.1}}}), 1.6, 1e-15);
}

TEST(SwitchLoss, LowerBoundWhenLoadEqualsProbability) {
  auto rng = seeded_stream(1, "simplex");
  for (int t = 0; t < 200; ++t) {
    Vec f(8);
    for (int i = 0; i < 8; ++i) f[i] = -std::log(1.0 - rng.next_uniform());
    f /= f.sum();
    EXPECT_GE(switch_loss({f, f}), 1.0);
  }
}

TEST(TotalLoss, SpecValues) {
  EXPECT_EQ(total_loss(1, 2, 3, 4, {1, 1, 1, 1}).total, 10.0);
  EXPECT_NEAR(total_loss(2, 1, 1, 1, {0.5, 1, 2, 0.01}).total, 4.01, 1e-15);
  const LossWeights no_switch{0.5, 0.5, 1.0, 0.0};
  EXPECT_EQ(total_loss(1, 2, 3, 0.5, no_switch).total, total_loss(1, 2, 3, 7.5, no_switch).total);
  const auto b = total_loss(1, 2, 3, 4, {1, 1, 1, 1});
  EXPECT_EQ(b.perception, 1.0);
  EXPECT_EQ(b.switch_loss, 4.0);
}

TEST(TotalLoss, LinearInEachWeight) {
  const LossWeights base{0.3, 0.7, 1.1, 0.05};
  const double parts[] = {1.5, 2.5, 0.25, 1.25};
  const double t0 = total_loss(parts[0], parts[1], parts[2], parts[3], base).total;
  LossWeights w = base;
  w.alpha3 += 2.0;
  EXPECT_NEAR(total_loss(parts[0], parts[1], parts[2], parts[3], w).total - t0, 2.0 * parts[2], 1e-14);
}

TEST(PlanningLoss, SpecValues) {
  const std::vector<Point2> truth = {{1, 2}, {3, 4}};
  EXPECT_EQ(planning_loss(truth, truth), 0.0);
  EXPECT_EQ(planning_loss(std::vector<Point2>(3), std::vector<Point2>(3)), 0.0);
  EXPECT_DOUBLE_EQ(planning_loss({{2, 2}, {4, 4}}, truth), 1.0);
}

TEST(OtherLosses, PredictionPerceptionAndCv) {
  EgoState s;
  s.x = 1;
  s.v = 2;
  EXPECT_DOUBLE_EQ(prediction_loss(Vec{{1, 1, 0, 2}}, s), 1.0);
  Mat a = Mat::Zero(2, 3), c = Mat::Zero(2, 3);
  a(0, 1) = 2.0;
  a(1, 0) = 5.0;
  EXPECT_DOUBLE_EQ(perception_loss(a, c, {1}), 2.0);
  EXPECT_EQ(coefficient_of_variation(Vec::Constant(4, 0.25)), 0.0);
  EXPECT_NEAR(coefficient_of_variation(Vec{{0.5, 0.5, 0, 0}}), 1.0, 1e-15);
}

TEST(Config, JsonRoundTripAndValidation) {
  RunConfig c = small_config();
  c.router.k = 3;
  c.loss.alpha4 = 0.2;
  EXPECT_EQ(run_config_to_json(run_config_from_json(run_config_to_json(c))), run_config_to_json(c));

  auto expect_config_error = [](const nlohmann::json& j) {
    try {
      run_config_from_json(j).validate();
      FAIL() << j.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::config);
    }
  };
  expect_config_error({{"adapter", {{"tau", 64}}}});
  expect_config_error({{"adapter", {{"tau", 0}}}});
  expect_config_error({{"router", {{"k", 9}}}});
  expect_config_error({{"model", {{"heads", 5}}}});
  expect_config_error({{"optimizer", {{"lr", -1}}}});
  expect_config_error({{"loss", {{"alpha1", 0}, {"alpha2", 0}, {"alpha3", 0}, {"alpha4", 0}}}});
  expect_config_error({{"nonsense", 1}});
  expect_config_error({{"router", {{"kk", 1}}}});
  EXPECT_NO_THROW(run_config_from_json(nlohmann::json::object()).validate());
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto model = init_model(small_config());
  const auto back = decode_checkpoint(encode_checkpoint(model));
  EXPECT_EQ(back.params, model.params);
  EXPECT_EQ(run_config_to_json(back.config), run_config_to_json(model.config));
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(model));
}

TEST(Checkpoint, CorruptionIsIoError) {
  auto bytes = encode_checkpoint(init_model(small_config()));
  for (auto mutate : {0, 1, 2}) {
    auto b = bytes;
    if (mutate == 0) b[0] = 'X';
    if (mutate == 1) b.resize(b.size() - 3);
    if (mutate == 2) b.resize(20);
    try {
      decode_checkpoint(b);
      FAIL() << mutate;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::io);
    }
  }
}

TEST(LearnableOps, AllBackwardPassesAgreeWithFiniteDifferences) {
  for (const auto& r : check_learnable_ops(3)) EXPECT_TRUE(r.report.passed) << r.name << " " << r.report.max_relative_error;
}

TEST(EndToEnd, GradientsMatchFiniteDifferencesForEveryGroup) {
  const auto cfg = small_config();
  const auto model = init_model(cfg);
  const auto set = make_set(cfg.scenario, 77, 2);
  std::vector<PreparedScenario> prep;
  for (const auto& sc : set.scenarios) prep.push_back(prepare_scenario(sc));
  const std::vector<const PreparedScenario*> probe = {&prep[0], &prep[1]};
  const auto reports = check_end_to_end(model, probe, 2, 5);
  EXPECT_EQ(reports.size(), model.params.size());
  for (const auto& r : reports) EXPECT_TRUE(r.report.passed) << r.name << " " << r.report.max_relative_error;
}

TEST(EndToEnd, SwitchLossReachesGate) {
  auto cfg = small_config();
  cfg.loss = {0.0, 0.0, 0.0, 1.0};
  const auto model = init_model(cfg);
  const auto set = make_set(cfg.scenario, 78, 4);
  std::vector<PreparedScenario> prep;
  std::vector<const PreparedScenario*> batch;
  for (const auto& sc : set.scenarios) prep.push_back(prepare_scenario(sc));
  for (const auto& p : prep) batch.push_back(&p);
  std::vector<RandomStream> noise(4, seeded_stream(0, "n"));
  ParamStore grads = zeros_like(model.params);
  const auto res = run_batch(model, batch, GateMode::eval, noise, &grads);
  EXPECT_GT(res.loss.switch_loss, 1.0);
  EXPECT_GT(grads.at("router.W_gate").cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(grads.at("planner.W1").cwiseAbs().maxCoeff(), 0.0);
}

TEST(Training, DeterministicCurves) {
  const auto cfg = small_config();
  const auto set = make_set(cfg.scenario, 5, 8);
  const auto a = train(cfg, set, quiet());
  const auto b = train(cfg, set, quiet());
  EXPECT_EQ(curves_csv(a.curves, 8), curves_csv(b.curves, 8));
  EXPECT_EQ(encode_checkpoint(a.model), encode_checkpoint(b.model));
  EXPECT_EQ(a.curves.size(), 3u);
}

TEST(Training, OpChecksRunFirst) {
  auto cfg = small_config();
  cfg.optimizer.epochs = 1;
  const auto res = train(cfg, make_set(cfg.scenario, 5, 4));
  EXPECT_FALSE(res.op_checks.empty());
}

TEST(Training, DenseDegenerateMatchesDenseBaselineBitForBit) {
  auto cfg = small_config();
  cfg.router.k = 8;
  cfg.patterns = {cfg.query_length(), cfg.model.expert_len, cfg.model.expert_len};
  auto dense_cfg = cfg;
  dense_cfg.model.dense_baseline = true;
  const auto set = make_set(cfg.scenario, 6, 8);
  const auto sparse = train(cfg, set, quiet());
  const auto dense = train(dense_cfg, set, quiet());
  EXPECT_EQ(curves_csv(sparse.curves, 8), curves_csv(dense.curves, 8));
  EXPECT_EQ(sparse.model.params, dense.model.params);
}

TEST(Training, PlanningImprovesOverFiftyEpochs) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = small_config();
    cfg.seed = seed;
    cfg.optimizer.epochs = 50;
    const auto res = train(cfg, make_set(cfg.scenario, 100 + seed, 16), quiet());
    EXPECT_LT(res.curves.back().loss.planning, res.curves.front().loss.planning) << "seed " << seed;
  }
}

TEST(Training, FrozenRouterKeepsGate) {
  auto cfg = small_config();
  cfg.router.freeze = true;
  const auto res = train(cfg, make_set(cfg.scenario, 7, 8), quiet());
  const auto init = init_model(cfg);
  EXPECT_EQ(res.model.params.at("router.W_gate"), init.params.at("router.W_gate"));
  EXPECT_NE(res.model.params.at("planner.W2"), init.params.at("planner.W2"));
}

TEST(Evaluate, OracleTrajectories) {
  const auto set = make_set(small_config().scenario, 8, 3);
  std::vector<const Scenario*> ptrs;
  std::vector<std::vector<Point2>> trajs;
  for (const auto& sc : set.scenarios) {
    ptrs.push_back(&sc);
    trajs.push_back(sc.gt_future);
  }
  const auto m = aggregate_metrics(ptrs, trajs);
  EXPECT_EQ(m.avg_l2, 0.0);
  EXPECT_EQ(m.collision_rate, 0.0);
  EXPECT_EQ(m.scenarios, 3u);
}

TEST(Evaluate, HandAveragedTwoScenarioManifest) {
  const auto set = make_set(small_config().scenario, 9, 2);
  std::vector<const Scenario*> ptrs = {&set.scenarios[0], &set.scenarios[1]};
  std::vector<std::vector<Point2>> trajs = {set.scenarios[0].gt_future, set.scenarios[1].gt_future};
  // Scenario 0 is off by 3 m laterally at every step; scenario 1 by 1 m at step 2 only.
  for (auto& p : trajs[0]) p.y += 3.0;
  trajs[1][1].x += 1.0;
  const auto m = aggregate_metrics(ptrs, trajs);
  EXPECT_DOUBLE_EQ(m.l2_at_h[0], 2.0);
  EXPECT_DOUBLE_EQ(m.l2_at_h[1], 1.5);
  EXPECT_DOUBLE_EQ(m.l2_at_h[2], 1.5);
  EXPECT_DOUBLE_EQ(m.avg_l2, (2.0 + 1.5 + 1.5) / 3.0);
}

TEST(Evaluate, PureFunctionAndSparserRoutingCostsLess) {
  auto cfg = small_config();
  const auto set = make_set(cfg.scenario, 10, 4);
  const auto model = init_model(cfg);
  const auto a = evaluate(model, set);
  const auto b = evaluate(model, set);
  EXPECT_EQ(a.avg_l2, b.avg_l2);
  EXPECT_EQ(a.expert_flops, b.expert_flops);
  auto dense_route = model;
  dense_route.config.router.k = 8;
  EXPECT_LT(a.expert_flops.total(), evaluate(dense_route, set).expert_flops.total());
}

TEST(Evaluate, MismatchedManifestIsShapeError) {
  auto cfg = small_config();
  auto other = cfg.scenario;
  other.d = 32;
  try {
    check_data_matches(cfg, other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}
