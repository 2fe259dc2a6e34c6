#pragma once

#include <cstddef>
#include <vector>

#include "expertad/feature_grid.hpp"
#include "expertad/tensor.hpp"

namespace expertad {

// ---------------------------------------------------------------------------
// Normalisation and pooling

/// Standardised BEV sequence plus the statistics used. Statistics are global
/// over (T, d, H, W) so that channel magnitudes survive into the task score.
struct StandardizedBEV {
  FeatureGrid seq;
  double mean = 0.0;
  double stddev = 1.0;
  bool zero_variance = false;  // tensor was constant; values only centred
};

StandardizedBEV standardize_bev(const FeatureGrid& bev_seq);

/// Frame-agnostic d x H x W representation: standardise, then mean over T.
struct FrameAgnosticBEV {
  FeatureGrid grid;  // T == 1
  bool zero_variance = false;
};

FrameAgnosticBEV pool_bev(const FeatureGrid& bev_seq);
/// Mean over T of an already standardised sequence.
FeatureGrid temporal_mean(const FeatureGrid& seq);

// ---------------------------------------------------------------------------
// Task score and soft channel selection

/// Per-channel spatial mean of a single-frame grid.
Vec channel_means(const FeatureGrid& grid);
/// s_c = w_c * mean_{i,j} grid[c, i, j].
Vec task_score(const FrameAgnosticBEV& bev_tilde, const Vec& w);

struct SelectionProblem {
  Vec s;
  double tau = 1.0;
  double eps_entropy = 1.0;
};

struct SelectionWeights {
  Vec lambda;
  double dual_mu = 0.0;
  int iterations = 0;
};

/// argmax_l s.l + eps * H(l) s.t. sum(l) = tau, H the elementwise binary
/// entropy. Solution l_c = sigmoid((s_c + mu) / eps); mu by bisection.
SelectionWeights soft_topk(const SelectionProblem& problem);

/// d(lambda)/ds = diag(g) - g g^T / sum(g), g_c = l_c (1 - l_c) / eps.
Mat soft_topk_jacobian(const SelectionWeights& weights, double eps_entropy);
/// Vector-Jacobian product without forming the matrix.
Vec soft_topk_backward(const SelectionWeights& weights, double eps_entropy, const Vec& dlambda);

// ---------------------------------------------------------------------------
// Alignment layer: F = MLP(BEV * lambda) + BEV

struct MlpParams {
  Mat W1, W2;       // d x d
  RowVec b1, b2;    // 1 x d
};

struct AlignCache {
  Mat selected;  // X * diag(lambda)
  Mat hidden;    // tanh(selected W1 + b1)
};

struct AlignGrads {
  Mat dW1, dW2;
  RowVec db1, db2;
  Vec dlambda;
};

/// Token-matrix form; rows are (t, h, w) positions.
Mat align_tokens(const Mat& tokens, const Vec& lambda, const MlpParams& mlp, AlignCache* cache = nullptr);
AlignGrads align_tokens_backward(const Mat& tokens, const Vec& lambda, const MlpParams& mlp,
                                 const AlignCache& cache, const Mat& dout);

/// Grid form; lambda broadcasts over time and space.
FeatureGrid align_features(const FeatureGrid& bev, const Vec& lambda, const MlpParams& mlp);

// ---------------------------------------------------------------------------
// Stub perception heads and ego query

enum class PerceptionTask { tracking, mapping };

/// One single-head cross-attention layer from learnable queries onto grid
/// tokens, with the queries as a residual path.
struct StubHeadParams {
  Mat queries;        // L_task x d
  Mat Wq, Wk, Wv;     // d x d
};

struct StubHeadCache {
  Mat q;     // queries * Wq
  Mat qk;    // q * Wk^T, scores are qk * tokens^T
  Mat ctx;   // attn * tokens
  Mat attn;  // L_task x S
};

struct StubHeadGrads {
  Mat dqueries, dWq, dWk, dWv;
  Mat dtokens;
};

Mat stub_head(const Mat& tokens, const StubHeadParams& p, StubHeadCache* cache = nullptr);
StubHeadGrads stub_head_backward(const Mat& tokens, const StubHeadParams& p,
                                 const StubHeadCache& cache, const Mat& dout);
/// Grid convenience: attends over the tokens of frame 0.
Mat stub_head(const FeatureGrid& aligned, PerceptionTask task, const StubHeadParams& p);

struct EgoQuery {
  std::vector<Mat> seq;  // B entries, each L x d
  std::size_t batch() const { return seq.size(); }
  std::size_t length() const { return seq.empty() ? 0 : static_cast<std::size_t>(seq.front().rows()); }
  std::size_t dim() const { return seq.empty() ? 0 : static_cast<std::size_t>(seq.front().cols()); }
};

/// Rows in order (agent, map, ego_embed), broadcast to `batch`.
EgoQuery build_ego_query(const Mat& agent_q, const Mat& map_q, const RowVec& ego_embed,
                         std::size_t batch = 1);

}  // namespace expertad
