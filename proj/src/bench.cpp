#include "expertad/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>
#include <vector>

#include "expertad/error.hpp"
#include "expertad/random_stream.hpp"

namespace expertad {
namespace {

Mat random_matrix(RandomStream rng, std::size_t rows, std::size_t cols, double sd) {
  Mat m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = sd * rng.next_normal();
  }
  return m;
}

FlopCount label_count(const std::map<std::string, FlopCount>& m, const std::string& label) {
  const auto it = m.find(label);
  return it == m.end() ? FlopCount{} : it->second;
}

FlopCount sum(const std::map<std::string, FlopCount>& m) {
  FlopCount t;
  for (const auto& [_, c] : m) t += c;
  return t;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

bool covers_all_keys(const AttentionPattern& pattern, std::size_t L_q, std::size_t L_kv) {
  return analytic_support_total(pattern, L_q, L_kv) == static_cast<std::uint64_t>(L_q) * L_kv;
}

BenchResult bench_attention(const AttentionPattern& pattern, std::size_t len, std::size_t dim, std::size_t heads,
                            std::size_t trials, std::uint64_t seed) {
  require(len >= 1 && dim >= 1 && heads >= 1 && dim % heads == 0, ErrorKind::config,
          "bench-attn: need len, dim, heads >= 1 with heads dividing dim");
  require(trials >= 1, ErrorKind::config, "bench-attn: trials must be >= 1");
  validate_pattern(pattern, len, len);
  const RandomStream rng = seeded_stream(seed, "bench-attn");
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  const Mat X = random_matrix(rng.fork("x"), len, dim, 1.0);
  const AttentionInputs in{X, X, X, heads};
  const AttentionProjections proj{random_matrix(rng.fork("Wq"), dim, dim, sd), random_matrix(rng.fork("Wk"), dim, dim, sd),
                                  random_matrix(rng.fork("Wv"), dim, dim, sd), random_matrix(rng.fork("Wo"), dim, dim, sd),
                                  random_matrix(rng.fork("bo"), 1, dim, 0.1)};

  BenchResult r;
  r.pattern = pattern;
  r.len = len;
  r.dim = dim;
  r.heads = heads;
  r.trials = trials;
  r.seed = seed;
  FlopTrace trace;
  const Mat out = sparse_mhca(in, pattern, proj, &trace);
  r.ledger = flop_ledger_by_label(trace.records());
  r.analytic = analytic_attention_flops(pattern, len, len, dim, heads);
  r.flops_match = true;
  for (const char* label : {"proj", "score", "softmax", "value", "topk_scan"}) {
    r.flops_match = r.flops_match && label_count(r.analytic, label) == label_count(r.ledger, label);
  }
  r.flops_match = r.flops_match && sum(r.analytic) == flop_ledger(trace.records());

  std::vector<double> ms;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    const Mat o = sparse_mhca(in, pattern, proj);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    require(o.allFinite(), ErrorKind::numerical, "bench-attn: non-finite output");
  }
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  r.wall_median_ms = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  r.wall_min_ms = sorted.front();
  r.wall_max_ms = sorted.back();

  if (covers_all_keys(pattern, len, len)) {
    r.dense_residual = (out - dense_reference(in, proj)).cwiseAbs().maxCoeff();
  }
  return r;
}

std::string bench_csv_header() {
  return "pattern,len,dim,heads,trials,seed,analytic_multiply_adds,analytic_exponentials,ledger_multiply_adds,"
         "ledger_exponentials,analytic_score_multiply_adds,ledger_score_multiply_adds,analytic_topk_scan_multiply_adds,"
         "flops_match,wall_ms_median,wall_ms_min,wall_ms_max,dense_residual";
}

std::string bench_csv_row(const BenchResult& r) {
  const FlopCount a = sum(r.analytic), l = sum(r.ledger);
  std::ostringstream os;
  os << to_string(r.pattern) << ',' << r.len << ',' << r.dim << ',' << r.heads << ',' << r.trials << ',' << r.seed
     << ',' << a.multiply_adds << ',' << a.exponentials << ',' << l.multiply_adds << ',' << l.exponentials << ','
     << label_count(r.analytic, "score").multiply_adds << ',' << label_count(r.ledger, "score").multiply_adds << ','
     << label_count(r.analytic, "topk_scan").multiply_adds << ',' << (r.flops_match ? "true" : "false") << ','
     << fmt(r.wall_median_ms) << ',' << fmt(r.wall_min_ms) << ',' << fmt(r.wall_max_ms) << ',';
  if (r.dense_residual) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3e", *r.dense_residual);
    os << buf;
  } else {
    os << "na";
  }
  return os.str();
}

}  // namespace expertad
