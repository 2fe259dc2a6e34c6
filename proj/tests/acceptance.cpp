// Acceptance suite: one PASS/FAIL line per criterion, details indented below.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "expertad/cli.hpp"
#include "expertad/losses.hpp"
#include "expertad/model.hpp"
#include "expertad/moe_router.hpp"
#include "expertad/perception_adapter.hpp"
#include "expertad/scenario_io.hpp"
#include "expertad/sparse_attention.hpp"
#include "expertad/trainer.hpp"
#include "json.hpp"

using namespace expertad;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Mat random_mat(RandomStream rng, std::size_t rows, std::size_t cols, double sd = 1.0) {
  Mat m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = sd * rng.next_normal();
  return m;
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& what) { details.push_back("     " + what); }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = run(args, o, e);
  if (out) *out = o.str();
  return code;
}

// ---------------------------------------------------------------------------

Outcome criterion_1() {
  Outcome r;
  const auto t0 = Clock::now();
  const std::size_t L = 16, d = 32, h = 4;
  double full_err = 0.0, masked_err = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto rng = seeded_stream(seed, "acceptance-1");
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    const AttentionProjections p{random_mat(rng.fork("Wq"), d, d, sd), random_mat(rng.fork("Wk"), d, d, sd),
                                 random_mat(rng.fork("Wv"), d, d, sd), random_mat(rng.fork("Wo"), d, d, sd),
                                 random_mat(rng.fork("bo"), 1, d, 0.1)};
    const AttentionInputs in{random_mat(rng.fork("Q"), L, d), random_mat(rng.fork("K"), L, d),
                             random_mat(rng.fork("V"), L, d), h};
    const Mat dense = dense_reference(in, p);
    for (const auto& pat : {AttentionPattern::block(L), AttentionPattern::window(L), AttentionPattern::topk(L)}) {
      full_err = std::max(full_err, (sparse_mhca(in, pat, p) - dense).cwiseAbs().maxCoeff());
    }
    for (const auto& pat : {AttentionPattern::block(4), AttentionPattern::window(2)}) {
      std::vector<std::vector<bool>> mask(L, std::vector<bool>(L, false));
      for (std::size_t i = 0; i < L; ++i)
        for (auto j : pattern_support(i, L, L, pat)) mask[i][j] = true;
      masked_err = std::max(masked_err, (sparse_mhca(in, pat, p) - masked_dense_attention(in, p, mask)).cwiseAbs().maxCoeff());
    }
  }
  const double secs = seconds_since(t0);
  r.require(full_err <= 1e-10, "full-support block/window/topk vs dense_reference: max err " + fmt("%.3g", full_err));
  r.require(masked_err <= 1e-10, "block(m=4)/window(w=2) vs masked dense: max err " + fmt("%.3g", masked_err));
  r.require(secs < 10.0, "runtime " + fmt("%.2f", secs) + " s (< 10 s)");
  return r;
}

std::map<std::string, std::string> bench_row(const std::string& pattern, std::size_t len, std::size_t trials) {
  std::string out;
  const int code = cli({"bench-attn", "--pattern", pattern, "--len", std::to_string(len), "--dim", "64", "--heads", "4",
                        "--trials", std::to_string(trials), "--seed", "1"},
                       &out);
  std::map<std::string, std::string> row;
  if (code != 0) return row;
  std::istringstream lines(out);
  std::string header, values;
  std::getline(lines, header);
  std::getline(lines, values);
  std::stringstream hs(header), vs(values);
  std::string k, v;
  while (std::getline(hs, k, ',') && std::getline(vs, v, ',')) row[k] = v;
  return row;
}

Outcome criterion_2() {
  Outcome r;
  for (std::size_t L : {64u, 256u, 1024u}) {
    const std::size_t trials = L == 1024 ? 5 : 1;
    const std::vector<std::string> patterns = {"dense", "block:" + std::to_string(L / 8), "window:8",
                                               "topk:" + std::to_string(L / 8)};
    std::map<std::string, std::map<std::string, std::string>> rows;
    bool all_match = true;
    for (const auto& pat : patterns) {
      rows[pat] = bench_row(pat, L, trials);
      all_match = all_match && rows[pat].count("flops_match") && rows[pat]["flops_match"] == "true" &&
                  rows[pat]["analytic_multiply_adds"] == rows[pat]["ledger_multiply_adds"] &&
                  rows[pat]["analytic_exponentials"] == rows[pat]["ledger_exponentials"];
    }
    r.require(all_match, "L=" + std::to_string(L) + ": analytic == ledger for dense, block, window, topk");
    const auto& blk = rows["block:" + std::to_string(L / 8)];
    const auto& den = rows["dense"];
    if (blk.count("ledger_score_multiply_adds") && den.count("ledger_score_multiply_adds")) {
      const auto b = std::stoull(blk.at("ledger_score_multiply_adds"));
      const auto dn = std::stoull(den.at("ledger_score_multiply_adds"));
      r.require(8 * b == dn, "L=" + std::to_string(L) + ": block(m=L/8) score MACs " + std::to_string(b) +
                                 " = dense " + std::to_string(dn) + " / 8");
    } else {
      r.require(false, "L=" + std::to_string(L) + ": bench-attn produced no row");
    }
    if (L == 1024 && blk.count("wall_ms_median") && den.count("wall_ms_median")) {
      const double tb = std::stod(blk.at("wall_ms_median")), td = std::stod(den.at("wall_ms_median"));
      r.require(tb < td, "L=1024 median wall time: dense " + fmt("%.2f", td) + " ms > block(m=128) " +
                             fmt("%.2f", tb) + " ms");
    }
  }
  return r;
}

Outcome criterion_3() {
  Outcome r;
  const auto t0 = Clock::now();
  auto rng = seeded_stream(3, "acceptance-3");
  const std::size_t d = 64;
  const double taus[] = {4, 8, 16, 32};
  double worst_sum = 0, worst_shift = 0, worst_perm = 0, worst_mono = 0;
  for (int t = 0; t < 1000; ++t) {
    auto prng = rng.fork(static_cast<std::uint64_t>(t));
    Vec s(d);
    for (std::size_t c = 0; c < d; ++c) s[c] = prng.next_normal();
    const double tau = taus[t % 4];
    const double eps = std::pow(10.0, prng.next_uniform(-3.0, 0.0));
    const auto base = soft_topk({s, tau, eps});
    worst_sum = std::max(worst_sum, std::abs(base.lambda.sum() - tau));
    const double shift = prng.next_uniform(-5.0, 5.0);
    const auto shifted = soft_topk({(s.array() + shift).matrix(), tau, eps});
    worst_shift = std::max(worst_shift, (shifted.lambda - base.lambda).cwiseAbs().maxCoeff());
    const auto perm = prng.permutation(d);
    Vec sp(d);
    for (std::size_t c = 0; c < d; ++c) sp[c] = s[perm[c]];
    const auto permuted = soft_topk({sp, tau, eps});
    for (std::size_t c = 0; c < d; ++c)
      worst_perm = std::max(worst_perm, std::abs(permuted.lambda[c] - base.lambda[perm[c]]));
    const std::size_t j = prng.next_index(d);
    Vec up = s;
    up[j] += prng.next_uniform(0.0, 1.0);
    worst_mono = std::max(worst_mono, base.lambda[j] - soft_topk({up, tau, eps}).lambda[j]);
  }
  r.require(worst_sum <= 1e-8, "constraint |sum(lambda) - tau| max " + fmt("%.3g", worst_sum) + " over 1000 problems");
  r.require(worst_shift <= 1e-9, "shift invariance max dev " + fmt("%.3g", worst_shift));
  r.require(worst_perm <= 1e-9, "permutation equivariance max dev " + fmt("%.3g", worst_perm));
  r.require(worst_mono <= 1e-9, "monotonicity max decrease " + fmt("%.3g", std::max(0.0, worst_mono)));

  double worst_jac = 0;
  for (int t = 0; t < 100; ++t) {
    auto prng = rng.fork("jacobian").fork(static_cast<std::uint64_t>(t));
    Vec s(d);
    for (std::size_t c = 0; c < d; ++c) s[c] = prng.next_normal();
    const double tau = taus[t % 4];
    const double eps = std::pow(10.0, prng.next_uniform(-3.0, 0.0));
    const auto sol = soft_topk({s, tau, eps});
    const Mat J = soft_topk_jacobian(sol, eps);
    const double step = 1e-4 * eps;
    for (std::size_t j = 0; j < d; ++j) {
      Vec sp = s, sm = s;
      sp[j] += step;
      sm[j] -= step;
      const Vec col = (soft_topk({sp, tau, eps}).lambda - soft_topk({sm, tau, eps}).lambda) / (2 * step);
      for (std::size_t i = 0; i < d; ++i) {
        const double a = J(i, j), n = col[i];
        worst_jac = std::max(worst_jac, std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)}));
      }
    }
  }
  r.require(worst_jac <= 1e-5, "Jacobian vs central differences max rel err " + fmt("%.3g", worst_jac) + " on 100 problems");
  const double secs = seconds_since(t0);
  r.require(secs < 30.0, "runtime " + fmt("%.2f", secs) + " s (< 30 s)");
  return r;
}

Outcome criterion_4() {
  Outcome r;
  auto rng = seeded_stream(4, "acceptance-4");
  const std::size_t N = 8, B = 16;
  bool literal = true, shift = true;
  for (int t = 0; t < 1000; ++t) {
    auto prng = rng.fork(static_cast<std::uint64_t>(t));
    const Mat logits = random_mat(prng.fork("logits"), B, N, 2.0);
    const std::size_t k = 1 + prng.fork("k").next_index(N);
    const auto decisions = route_topk(logits, k);
    const double c = prng.fork("shift").next_uniform(-10.0, 10.0);
    const auto moved = route_topk((logits.array() + c).matrix(), k);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& dd = decisions[b];
      std::vector<double> probs(N);
      double mx = logits.row(b).maxCoeff(), z = 0;
      for (std::size_t i = 0; i < N; ++i) z += (probs[i] = std::exp(logits(b, i) - mx));
      for (double& p : probs) p /= z;
      std::vector<std::size_t> order(N);
      for (std::size_t i = 0; i < N; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t bb) { return probs[a] > probs[bb]; });
      order.resize(k);
      literal = literal && dd.selected == order;
      for (std::size_t i = 0; i < N; ++i) literal = literal && std::abs(dd.probs[i] - probs[i]) <= 1e-15;
      double sum = 0;
      for (std::size_t i = 0; i < k; ++i) {
        literal = literal && dd.scores[i] == dd.probs[order[i]];
        sum += dd.scores[i];
      }
      literal = literal && (k == N ? std::abs(sum - 1.0) <= 1e-12 : sum < 1.0);
      shift = shift && moved[b].selected == dd.selected;
    }
  }
  r.require(literal, "softmax-then-TopK (no renormalisation) matches brute-force sort on 1000 batches of 16");
  r.require(shift, "selection unchanged under a constant logit shift on every example");

  // Eval-mode determinism, both for the gate alone and the full forward.
  RunConfig cfg;
  const Model model = init_model(cfg);
  const Scenario sc = generate_scenario(cfg.scenario, 44);
  const PreparedScenario prep = prepare_scenario(sc);
  auto n1 = seeded_stream(1, "router-noise"), n2 = seeded_stream(2, "router-noise");
  const auto o1 = forward_scenario(model, prep, GateMode::eval, n1);
  const auto o2 = forward_scenario(model, prep, GateMode::eval, n2);
  bool det = o1.decision.logits == o2.decision.logits && o1.decision.probs == o2.decision.probs &&
             o1.decision.selected == o2.decision.selected && o1.decision.scores == o2.decision.scores;
  for (std::size_t s = 0; s < o1.trajectory.size(); ++s) det = det && o1.trajectory[s] == o2.trajectory[s];
  r.require(det, "eval-mode RoutingDecision and trajectory bitwise identical across runs with different streams");

  const auto mrng = rng.fork("mc");
  const std::size_t d = 16;
  GateParams gp{random_mat(mrng.fork("g"), d, N, 0.25), random_mat(mrng.fork("n"), d, N, 0.25), 1e-2};
  const Mat x = random_mat(mrng.fork("x"), 1, d);
  const Mat mean = x * gp.W_gate, pre = x * gp.W_noise;
  auto noise = seeded_stream(4, "router-noise");
  const int draws = 100000;
  Vec sq = Vec::Zero(N);
  for (int t = 0; t < draws; ++t) {
    const Mat g = gate_logits(x, gp, GateMode::train, noise);
    sq += (g - mean).transpose().array().square().matrix();
  }
  double worst = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const double expect = std::log1p(std::exp(pre(0, i))) + gp.eps_noise;
    worst = std::max(worst, std::abs(std::sqrt(sq[i] / draws) / expect - 1.0));
  }
  r.require(worst <= 0.02, "Monte-Carlo noise std vs softplus(x W_noise) + eps at 1e5 draws: max rel dev " + fmt("%.4f", worst));
  return r;
}

Outcome criterion_5() {
  Outcome r;
  const std::size_t N = 8;
  const Vec uniform = Vec::Constant(N, 1.0 / N);
  r.require(switch_loss({uniform, uniform}) == 1.0, "uniform f = P gives exactly 1.0");
  Vec one = Vec::Zero(N);
  one[3] = 1.0;
  r.require(switch_loss({one, one}) == static_cast<double>(N), "full concentration gives exactly N = 8");
  auto rng = seeded_stream(5, "acceptance-5");
  double lowest = 1e9;
  for (int t = 0; t < 1000; ++t) {
    Vec f(N);
    for (std::size_t i = 0; i < N; ++i) f[i] = -std::log(1.0 - rng.next_uniform());
    f /= f.sum();
    lowest = std::min(lowest, switch_loss({f, f}));
  }
  r.require(lowest >= 1.0, "f = P lower bound over 1000 simplex draws: min " + fmt("%.6f", lowest));
  return r;
}

Outcome criterion_6(const fs::path& work) {
  Outcome r;
  const auto t0 = Clock::now();
  const auto report = work / "gradcheck.json";
  const int code = cli({"gradcheck", "--report", report.string()});
  const double secs = seconds_since(t0);
  r.require(code == 0, "gradcheck exit code " + std::to_string(code));
  double worst = 0;
  std::size_t groups = 0;
  bool all = true;
  try {
    const auto j = nlohmann::json::parse(slurp(report));
    for (const auto& g : j.at("parameter_groups")) {
      ++groups;
      worst = std::max(worst, g.at("max_relative_error").get<double>());
      all = all && g.at("passed").get<bool>();
    }
  } catch (const std::exception& e) {
    all = false;
    r.note(std::string("report unreadable: ") + e.what());
  }
  RunConfig cfg;
  const std::size_t expected = init_model(cfg).params.size();
  r.require(all && groups == expected && worst <= 1e-4,
            std::to_string(groups) + "/" + std::to_string(expected) + " parameter groups, max rel err " + fmt("%.3g", worst));
  r.require(secs < 120.0, "runtime " + fmt("%.1f", secs) + " s (< 120 s)");
  return r;
}

// ---------------------------------------------------------------------------
// Trend studies. Criteria 7-9 share the default run (learned top-4 router,
// tau = d/8, alpha4 = 0.01) of each seed.

constexpr int kSeeds = 5;
constexpr std::size_t kTrainScenarios = 256;
constexpr std::size_t kEvalScenarios = 64;

ScenarioSet make_set(const ScenarioConfig& cfg, std::uint64_t base, std::size_t n) {
  ScenarioSet s;
  s.config = cfg;
  s.seeds = scenario_seeds(base, n);
  for (auto seed : s.seeds) s.scenarios.push_back(generate_scenario(cfg, seed));
  return s;
}

struct RunResult {
  EvalMetrics eval;
  double final_cv = 0.0;
  double seconds = 0.0;
  Model model;
};

class TrendRuns {
 public:
  RunResult& get(int seed, const std::string& variant) {
    const auto key = std::to_string(seed) + "/" + variant;
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    RunConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(seed);
    if (variant == "frozen") cfg.router.freeze = true;
    if (variant == "alpha4=0") cfg.loss.alpha4 = 0.0;
    if (variant.rfind("tau=", 0) == 0) cfg.adapter.tau = std::stod(variant.substr(4));
    const auto& sets = data(seed, cfg.scenario);
    const auto t0 = Clock::now();
    TrainOptions opt;
    opt.run_op_checks = false;
    TrainResult tr = train(cfg, sets.first, opt);
    RunResult res;
    res.eval = evaluate(tr.model, sets.second);
    res.final_cv = coefficient_of_variation(tr.curves.back().stats.f);
    res.seconds = seconds_since(t0);
    res.model = std::move(tr.model);
    return cache_.emplace(key, std::move(res)).first->second;
  }

  const std::pair<ScenarioSet, ScenarioSet>& data(int seed, const ScenarioConfig& cfg) {
    auto it = data_.find(seed);
    if (it == data_.end()) {
      it = data_.emplace(seed, std::make_pair(make_set(cfg, 1000 + seed, kTrainScenarios),
                                              make_set(cfg, 5000 + seed, kEvalScenarios))).first;
    }
    return it->second;
  }

 private:
  std::map<std::string, RunResult> cache_;
  std::map<int, std::pair<ScenarioSet, ScenarioSet>> data_;
};

const std::string kDefault = "tau=8";

Outcome criterion_7(TrendRuns& runs) {
  Outcome r;
  double secs = 0;
  bool every_seed = true, flops_ok = true;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    auto& learned = runs.get(seed, kDefault);
    auto& frozen = runs.get(seed, "frozen");
    secs += learned.seconds + frozen.seconds;
    every_seed = every_seed && learned.eval.avg_l2 <= frozen.eval.avg_l2;
    Model full = learned.model;
    full.config.router.k = full.config.router.experts;
    const auto& eval_set = runs.data(seed, learned.model.config.scenario).second;
    const double k4 = static_cast<double>(learned.eval.expert_flops.total());
    const double k8 = static_cast<double>(evaluate(full, eval_set).expert_flops.total());
    flops_ok = flops_ok && k4 <= 0.5 * k8;
    r.note("seed " + std::to_string(seed) + ": avg_l2 learned " + fmt("%.4f", learned.eval.avg_l2) + " vs frozen " +
           fmt("%.4f", frozen.eval.avg_l2) + "; expert FLOPs k=4/k=8 = " + fmt("%.5f", k4 / k8));
  }
  r.require(every_seed, "(a) learned top-4 avg_l2 <= frozen random-4 router on every seed");
  r.require(flops_ok, "(b) expert-layer FLOPs at k=4 <= 0.5 x k=8 on every seed");
  r.require(secs < 900.0, "runtime " + fmt("%.0f", secs) + " s (< 900 s)");
  return r;
}

Outcome criterion_8(TrendRuns& runs) {
  Outcome r;
  const std::vector<std::string> taus = {"tau=4", "tau=8", "tau=16", "tau=32"};
  int interior = 0, strict = 0;
  double secs = 0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    std::string line = "seed " + std::to_string(seed) + ":";
    std::size_t best = 0;
    std::vector<double> l2;
    for (const auto& t : taus) {
      auto& res = runs.get(seed, t);
      if (t != kDefault) secs += res.seconds;
      l2.push_back(res.eval.avg_l2);
      line += " " + t + " " + fmt("%.4f", res.eval.avg_l2);
    }
    best = static_cast<std::size_t>(std::min_element(l2.begin(), l2.end()) - l2.begin());
    const bool inner = best != taus.size() - 1;
    interior += inner;
    strict += inner && best != 0;
    r.note(line + " -> best " + taus[best] + (inner ? " (not the largest)" : ""));
  }
  r.require(interior >= 4, "best tau is not the largest on " + std::to_string(interior) + "/5 seeds (need >= 4)");
  r.note("best tau strictly between the smallest and largest on " + std::to_string(strict) + "/5 seeds");
  r.require(secs < 1200.0, "runtime of the extra sweep runs " + fmt("%.0f", secs) + " s (< 1200 s)");
  return r;
}

Outcome criterion_9(TrendRuns& runs) {
  Outcome r;
  double with = 0, without = 0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const double a = runs.get(seed, kDefault).final_cv, b = runs.get(seed, "alpha4=0").final_cv;
    with += a / kSeeds;
    without += b / kSeeds;
    r.note("seed " + std::to_string(seed) + ": CV(f) alpha4=0.01 " + fmt("%.4f", a) + ", alpha4=0 " + fmt("%.4f", b));
  }
  r.require(with < without, "mean final-epoch CV(f): alpha4=0.01 " + fmt("%.4f", with) + " < alpha4=0 " + fmt("%.4f", without));
  return r;
}

Outcome criterion_10(const fs::path& work) {
  Outcome r;
  const auto cfg_path = work / "repro_config.json";
  std::ofstream(cfg_path) << nlohmann::json{{"seed", 10}, {"optimizer", {{"epochs", 5}}}}.dump(2);
  std::vector<std::string> curves, reports;
  bool ok = true;
  for (int round = 0; round < 2; ++round) {
    const auto dir = work / ("repro_" + std::to_string(round));
    fs::create_directories(dir);
    ok = ok && cli({"gen", "--config", cfg_path.string(), "--out", (dir / "data").string(), "--count", "16"}) == 0;
    ok = ok && cli({"train", "--config", cfg_path.string(), "--data", (dir / "data").string(), "--out",
                    (dir / "model.ckpt").string(), "--curves", (dir / "curves.csv").string()}) == 0;
    ok = ok && cli({"eval", "--ckpt", (dir / "model.ckpt").string(), "--data", (dir / "data").string(), "--report",
                    (dir / "eval.json").string()}) == 0;
    curves.push_back(slurp(dir / "curves.csv"));
    auto j = nlohmann::json::parse(slurp(dir / "eval.json"), nullptr, false);
    if (j.is_object()) j.erase("timing");
    reports.push_back(j.dump());
  }
  r.require(ok, "gen -> train -> eval exit 0 twice");
  r.require(!curves[0].empty() && curves[0] == curves[1], "curves CSV byte-identical (" + std::to_string(curves[0].size()) + " bytes)");
  r.require(reports[0] != "null" && reports[0] == reports[1], "eval JSON identical with timing removed");
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  std::set<int> chosen(only.begin(), only.end());
  if (chosen.empty())
    for (int c = 1; c <= 10; ++c) chosen.insert(c);

  const fs::path work = fs::temp_directory_path() / "expertad_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  TrendRuns runs;

  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {1, {"sparse = dense oracle suite", criterion_1}},
      {2, {"FLOP law and latency", criterion_2}},
      {3, {"soft_topk suite", criterion_3}},
      {4, {"router suite", criterion_4}},
      {5, {"switch-loss law", criterion_5}},
      {6, {"end-to-end gradient check", [&] { return criterion_6(work); }}},
      {7, {"top-k routing trend", [&] { return criterion_7(runs); }}},
      {8, {"tau sweep trend", [&] { return criterion_8(runs); }}},
      {9, {"load-balance effect", [&] { return criterion_9(runs); }}},
      {10, {"reproducibility", [&] { return criterion_10(work); }}},
  };

  int failures = 0;
  for (int c : chosen) {
    const auto it = criteria.find(c);
    if (it == criteria.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failures += !o.pass;
    std::printf("criterion %d: %s  %s (%.1f s)\n", c, o.pass ? "PASS" : "FAIL", it->second.first.c_str(),
                seconds_since(t0));
    for (const auto& d : o.details) std::printf("    %s\n", d.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(work);
  return failures == 0 ? 0 : 1;
}
