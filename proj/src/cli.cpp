#include "expertad/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "expertad/bench.hpp"
#include "expertad/checkpoint.hpp"
#include "expertad/checks.hpp"
#include "expertad/error.hpp"
#include "expertad/scenario_io.hpp"
#include "expertad/trainer.hpp"

namespace expertad {
namespace {

namespace fs = std::filesystem;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config:
    case ErrorKind::shape: return 2;
    case ErrorKind::numerical: return 3;
    case ErrorKind::io: return 4;
  }
  return 1;
}

// Where error_kind=... is the machine-parsable part.
int report_error(std::ostream& err, ErrorKind kind, const std::string& message) {
  err << "error_kind=" << to_string(kind) << " message=" << nlohmann::json(message).dump() << '\n';
  return exit_code(kind);
}

struct Paths {
  std::string workdir = ".";
  std::string resolve(const std::string& p) const {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(workdir) / p).string();
  }
};

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), ErrorKind::io, "cannot open '" + path + "' for writing");
  f << text;
  require(static_cast<bool>(f), ErrorKind::io, "write failed for '" + path + "'");
}

RunConfig config_or_default(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

nlohmann::json reports_json(const std::vector<NamedReport>& reports, bool& all_passed) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    all_passed = all_passed && r.report.passed;
    arr.push_back({{"name", r.name},
                   {"passed", r.report.passed},
                   {"max_relative_error", r.report.finite ? nlohmann::json(r.report.max_relative_error)
                                                          : nlohmann::json("inf")},
                   {"worst_coordinate", r.report.worst_coordinate}});
  }
  return arr;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"expertad: sparse-expert planning toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Paths paths;
  app.add_option("--workdir", paths.workdir, "root for relative paths");

  std::string config_path, out_path, data_path, ckpt_path, curves_path, report_path, selections_path;
  std::size_t count = 0;

  auto* gen = app.add_subcommand("gen", "generate a scenario set and manifest");
  gen->add_option("--config", config_path, "run config JSON");
  gen->add_option("--out", out_path, "output directory")->required();
  gen->add_option("--count", count, "number of scenarios")->required();
  std::uint64_t gen_seed = 0;
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "base scenario seed (default: config seed)");

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config_path, "run config JSON");
  tr->add_option("--data", data_path, "scenario set directory")->required();
  tr->add_option("--out", ckpt_path, "checkpoint path")->required();
  tr->add_option("--curves", curves_path, "per-epoch curves CSV")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  ev->add_option("--data", data_path, "scenario set directory")->required();
  ev->add_option("--report", report_path, "report JSON")->required();

  std::string pattern_text = "dense";
  std::size_t len = 64, dim = 32, heads = 4, trials = 5;
  std::uint64_t bench_seed = 0;
  auto* bench = app.add_subcommand("bench-attn", "FLOP ledger and timing for one attention pattern");
  bench->add_option("--pattern", pattern_text, "dense | block:<m> | window:<w> | topk:<k>")->required();
  bench->add_option("--len", len, "sequence length");
  bench->add_option("--dim", dim, "model width");
  bench->add_option("--heads", heads, "attention heads");
  bench->add_option("--trials", trials, "timed trials");
  bench->add_option("--seed", bench_seed, "input seed");
  bench->add_option("--report", report_path, "CSV output (stdout when omitted)");

  std::size_t probe = 2, coords = 4;
  auto* gc = app.add_subcommand("gradcheck", "full gradient-check suite");
  gc->add_option("--config", config_path, "run config JSON");
  gc->add_option("--probe", probe, "probe batch size");
  gc->add_option("--coords", coords, "random coordinates per parameter group");
  gc->add_option("--report", report_path, "report JSON (stdout when omitted)");

  auto* rs = app.add_subcommand("route-stats", "routing load statistics over a scenario set");
  rs->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  rs->add_option("--data", data_path, "scenario set directory")->required();
  rs->add_option("--report", report_path, "report JSON")->required();
  rs->add_option("--selections", selections_path, "B x k selection CSV (default: next to the report)");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    return report_error(err, ErrorKind::config, e.what());
  }

  try {
    if (*gen) {
      const RunConfig cfg = config_or_default(paths.resolve(config_path));
      require(count >= 1, ErrorKind::config, "gen: --count must be >= 1");
      const auto dir = paths.resolve(out_path);
      const std::uint64_t base = gen_seed_opt->count() > 0 ? gen_seed : cfg.seed;
      write_scenario_set(dir, cfg.scenario, scenario_seeds(base, count));
      out << nlohmann::json{{"command", "gen"}, {"out", dir}, {"count", count}, {"config", run_config_to_json(cfg)},
                            {"seed", base}}
                 .dump()
          << '\n';
    } else if (*tr) {
      const RunConfig cfg = config_or_default(paths.resolve(config_path));
      const ScenarioSet data = load_scenario_set(paths.resolve(data_path));
      const TrainResult res = train(cfg, data);
      save_checkpoint(paths.resolve(ckpt_path), res.model);
      write_text(paths.resolve(curves_path), curves_csv(res.curves, cfg.router.experts));
      const auto& last = res.curves.back().loss;
      out << nlohmann::json{{"command", "train"},
                            {"config", run_config_to_json(cfg)},
                            {"seed", cfg.seed},
                            {"epochs", res.curves.size()},
                            {"final", {{"perception", last.perception},
                                       {"prediction", last.prediction},
                                       {"planning", last.planning},
                                       {"switch", last.switch_loss},
                                       {"total", last.total}}}}
                 .dump()
          << '\n';
    } else if (*ev) {
      const Model model = load_checkpoint(paths.resolve(ckpt_path));
      const ScenarioSet data = load_scenario_set(paths.resolve(data_path));
      const EvalMetrics m = evaluate(model, data);
      const auto report = eval_report(m, model.config);
      write_text(paths.resolve(report_path), report.dump(2) + "\n");
      out << report.dump() << '\n';
    } else if (*bench) {
      const BenchResult r = bench_attention(parse_pattern(pattern_text), len, dim, heads, trials, bench_seed);
      const std::string csv = bench_csv_header() + "\n" + bench_csv_row(r) + "\n";
      if (report_path.empty()) {
        out << csv;
      } else {
        write_text(paths.resolve(report_path), csv);
        out << csv;
      }
      require(r.flops_match, ErrorKind::numerical, "bench-attn: analytic FLOPs differ from the instrumented ledger");
    } else if (*gc) {
      const RunConfig cfg = config_or_default(paths.resolve(config_path));
      require(probe >= 1, ErrorKind::config, "gradcheck: --probe must be >= 1");
      const Model model = init_model(cfg);
      std::vector<Scenario> scenarios;
      for (std::uint64_t s : scenario_seeds(cfg.seed ^ 0x9e3779b97f4a7c15ULL, probe)) {
        scenarios.push_back(generate_scenario(cfg.scenario, s));
      }
      std::vector<PreparedScenario> prep;
      for (const auto& sc : scenarios) prep.push_back(prepare_scenario(sc));
      std::vector<const PreparedScenario*> batch;
      for (const auto& p : prep) batch.push_back(&p);
      bool passed = true;
      const auto ops = reports_json(check_learnable_ops(cfg.seed), passed);
      const auto groups = reports_json(check_end_to_end(model, batch, coords, cfg.seed), passed);
      const nlohmann::json report{{"command", "gradcheck"},
                                  {"config", run_config_to_json(cfg)},
                                  {"seed", cfg.seed},
                                  {"step", kGradStep},
                                  {"tolerance", kGradTolerance},
                                  {"passed", passed},
                                  {"ops", ops},
                                  {"parameter_groups", groups}};
      if (!report_path.empty()) write_text(paths.resolve(report_path), report.dump(2) + "\n");
      out << report.dump() << '\n';
      if (!passed) {
        for (const auto* section : {&ops, &groups}) {
          for (const auto& r : *section) {
            if (!r.at("passed").get<bool>()) {
              return report_error(err, ErrorKind::numerical,
                                  "gradient check failed for '" + r.at("name").get<std::string>() + "'");
            }
          }
        }
      }
    } else if (*rs) {
      const Model model = load_checkpoint(paths.resolve(ckpt_path));
      const ScenarioSet data = load_scenario_set(paths.resolve(data_path));
      const RouteStats s = route_stats(model, data);
      const std::string report_file = paths.resolve(report_path);
      std::string sel_file = selections_path.empty()
                                 ? (fs::path(report_file).replace_extension("").string() + "_selections.csv")
                                 : paths.resolve(selections_path);
      std::string csv;
      for (std::size_t i = 1; i <= model.config.router.k; ++i) csv += (i > 1 ? ",slot_" : "slot_") + std::to_string(i);
      csv += '\n';
      for (const auto& row : s.selections) {
        for (std::size_t i = 0; i < row.size(); ++i) csv += (i ? "," : "") + std::to_string(row[i]);
        csv += '\n';
      }
      write_text(sel_file, csv);
      nlohmann::json experts = nlohmann::json::array();
      for (std::size_t i = 0; i < model.bank.size(); ++i) {
        experts.push_back({{"index", i}, {"name", model.bank[i].name}, {"f", s.stats.f[static_cast<Eigen::Index>(i)]},
                           {"P", s.stats.P[static_cast<Eigen::Index>(i)]}});
      }
      const nlohmann::json report{{"command", "route-stats"},
                                  {"config", run_config_to_json(model.config)},
                                  {"seed", model.config.seed},
                                  {"scenarios", s.selections.size()},
                                  {"experts", experts},
                                  {"switch_loss", s.switch_value},
                                  {"selections_csv", sel_file}};
      write_text(report_file, report.dump(2) + "\n");
      out << report.dump() << '\n';
    }
  } catch (const Error& e) {
    return report_error(err, e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error(err, ErrorKind::io, e.what());
  } catch (const nlohmann::json::exception& e) {
    return report_error(err, ErrorKind::config, e.what());
  }
  return 0;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace expertad
