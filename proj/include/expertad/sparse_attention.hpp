#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "expertad/flops.hpp"
#include "expertad/tensor.hpp"

namespace expertad {

struct AttentionPattern {
  enum class Kind { dense, block, window, topk };
  Kind kind = Kind::dense;
  std::size_t param = 0;  // m, w or k; unused for dense

  static AttentionPattern dense() { return {Kind::dense, 0}; }
  static AttentionPattern block(std::size_t m) { return {Kind::block, m}; }
  static AttentionPattern window(std::size_t w) { return {Kind::window, w}; }
  static AttentionPattern topk(std::size_t k) { return {Kind::topk, k}; }

  friend bool operator==(const AttentionPattern&, const AttentionPattern&) = default;
};

/// Grammar: dense | block:<m> | window:<w> | topk:<k>
AttentionPattern parse_pattern(const std::string& text);
std::string to_string(const AttentionPattern& p);
/// Throws when the pattern cannot be evaluated against L_kv keys.
void validate_pattern(const AttentionPattern& p, std::size_t L_q, std::size_t L_kv);

/// Support set C_i in ascending key order.
///  block:  { j : floor(j'/m) == floor(i/m) }, j' = floor(j * L_q / L_kv)
///  window: [i - w, i + w] clamped to [0, L_kv)
///  topk:   k largest entries of scores_row, ties to the lowest index
std::vector<std::size_t> pattern_support(std::size_t i, std::size_t L_q, std::size_t L_kv,
                                         const AttentionPattern& pattern,
                                         std::optional<std::span<const double>> scores_row = std::nullopt);

struct AttentionInputs {
  Mat Q;  // L_q x d
  Mat K;  // L_kv x d
  Mat V;  // L_kv x d
  std::size_t heads = 1;
};

struct AttentionProjections {
  Mat Wq, Wk, Wv, Wo;  // d x d
  RowVec bo;           // 1 x d
};

struct AttentionCache {
  Mat q, k, v, ctx;
  std::size_t heads = 1;
  // supports[h][i] and weights[h][i] over that support
  std::vector<std::vector<std::vector<std::size_t>>> supports;
  std::vector<std::vector<std::vector<double>>> weights;
};

struct AttentionGrads {
  Mat dWq, dWk, dWv, dWo;
  RowVec dbo;
  Mat dQ, dK, dV;
};

/// Sparse multi-head cross-attention. Softmax is normalised over exactly
/// C_i. Every primitive is appended to `trace` when given.
Mat sparse_mhca(const AttentionInputs& in, const AttentionPattern& pattern, const AttentionProjections& proj,
                FlopTrace* trace = nullptr, AttentionCache* cache = nullptr);

AttentionGrads sparse_mhca_backward(const AttentionInputs& in, const AttentionProjections& proj,
                                    const AttentionCache& cache, const Mat& dout);

/// Straight-line full-support attention with no sparsity machinery. Uses the
/// same scalar evaluation order as sparse_mhca so full-support patterns are
/// bitwise equal to it.
Mat dense_reference(const AttentionInputs& in, const AttentionProjections& proj,
                    AttentionCache* cache = nullptr, FlopTrace* trace = nullptr);

/// Dense attention with an explicit mask (true = allowed). Scores outside
/// the mask are -inf before a full-row softmax. Oracle for block/window.
Mat masked_dense_attention(const AttentionInputs& in, const AttentionProjections& proj,
                           const std::vector<std::vector<bool>>& mask);

/// Closed-form FLOP counts per ledger label ("proj", "score", "softmax",
/// "value", "topk_scan") for the kernel above.
std::map<std::string, FlopCount> analytic_attention_flops(const AttentionPattern& pattern, std::size_t L_q,
                                                          std::size_t L_kv, std::size_t dim,
                                                          std::size_t heads);
/// Sum over queries of |C_i| for one head, from the support formulas.
std::uint64_t analytic_support_total(const AttentionPattern& pattern, std::size_t L_q, std::size_t L_kv);

}  // namespace expertad
