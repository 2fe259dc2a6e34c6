#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "expertad/flops.hpp"
#include "expertad/sparse_attention.hpp"

namespace expertad {

struct BenchResult {
  AttentionPattern pattern;
  std::size_t len = 0, dim = 0, heads = 0, trials = 0;
  std::uint64_t seed = 0;
  std::map<std::string, FlopCount> analytic;  // per ledger label
  std::map<std::string, FlopCount> ledger;
  bool flops_match = false;
  double wall_median_ms = 0.0, wall_min_ms = 0.0, wall_max_ms = 0.0;
  std::optional<double> dense_residual;  // max |sparse - dense_reference| when the pattern covers every key
};

/// Self-attention over random L x D inputs: one instrumented call for the
/// ledger, then `trials` sequential timed calls.
BenchResult bench_attention(const AttentionPattern& pattern, std::size_t len, std::size_t dim, std::size_t heads,
                            std::size_t trials, std::uint64_t seed);

/// True when every query's support is the full key range.
bool covers_all_keys(const AttentionPattern& pattern, std::size_t L_q, std::size_t L_kv);

std::string bench_csv_header();
std::string bench_csv_row(const BenchResult& r);

}  // namespace expertad
