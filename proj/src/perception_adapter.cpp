#include "expertad/perception_adapter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "expertad/error.hpp"
#include "expertad/math_util.hpp"

namespace expertad {

StandardizedBEV standardize_bev(const FeatureGrid& bev_seq) {
  require(bev_seq.time() >= 1 && bev_seq.size() > 0, ErrorKind::shape, "standardize_bev: empty input");
  StandardizedBEV out;
  const auto& v = bev_seq.data();
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= n;
  out.mean = mean;
  out.zero_variance = !(var > 0.0);
  out.stddev = out.zero_variance ? 1.0 : std::sqrt(var);
  out.seq = bev_seq;
  for (double& x : out.seq.data()) {
    x -= mean;
    if (!out.zero_variance) x /= out.stddev;
  }
  return out;
}

FeatureGrid temporal_mean(const FeatureGrid& seq) {
  FeatureGrid out(1, seq.channels(), seq.height(), seq.width());
  const std::size_t frame = seq.positions() * seq.channels();
  auto& o = out.data();
  const auto& s = seq.data();
  for (std::size_t t = 0; t < seq.time(); ++t) {
    for (std::size_t i = 0; i < frame; ++i) o[i] += s[t * frame + i];
  }
  const double inv = 1.0 / static_cast<double>(seq.time());
  for (double& x : o) x *= inv;
  return out;
}

FrameAgnosticBEV pool_bev(const FeatureGrid& bev_seq) {
  StandardizedBEV st = standardize_bev(bev_seq);
  return {temporal_mean(st.seq), st.zero_variance};
}

Vec channel_means(const FeatureGrid& grid) {
  const ConstMatMap tokens = grid.frame_matrix(0);
  return tokens.colwise().mean().transpose();
}

Vec task_score(const FrameAgnosticBEV& bev_tilde, const Vec& w) {
  require(static_cast<std::size_t>(w.size()) == bev_tilde.grid.channels(), ErrorKind::shape,
          "task_score: weight length differs from channel count");
  return channel_means(bev_tilde.grid).cwiseProduct(w);
}

// ---------------------------------------------------------------------------

namespace {

double lambda_sum(const Vec& s, double mu, double eps) {
  double sum = 0.0;
  for (Eigen::Index c = 0; c < s.size(); ++c) sum += sigmoid((s[c] + mu) / eps);
  return sum;
}

}  // namespace

SelectionWeights soft_topk(const SelectionProblem& problem) {
  const Vec& s = problem.s;
  const auto d = static_cast<double>(s.size());
  require(s.size() >= 1, ErrorKind::shape, "soft_topk: empty score vector");
  require(problem.tau > 0.0 && problem.tau < d, ErrorKind::config, "soft_topk: tau must lie in (0, d)");
  require(problem.eps_entropy > 0.0, ErrorKind::config, "soft_topk: eps_entropy must be positive");
  require(s.allFinite(), ErrorKind::numerical, "soft_topk: non-finite scores");

  const double eps = problem.eps_entropy;
  const double logit = std::log(problem.tau / (d - problem.tau));
  // At mu_lo every lambda <= tau/d, at mu_hi every lambda >= tau/d.
  double lo = -s.maxCoeff() + eps * logit;
  double hi = -s.minCoeff() + eps * logit;
  if (lambda_sum(s, lo, eps) > problem.tau + 1e-9 || lambda_sum(s, hi, eps) < problem.tau - 1e-9) {
    fail(ErrorKind::numerical, "soft_topk: bisection failed to bracket the dual variable");
  }

  SelectionWeights out;
  double mu = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    mu = 0.5 * (lo + hi);
    out.iterations = it + 1;
    const double sum = lambda_sum(s, mu, eps);
    if (std::abs(sum - problem.tau) <= 1e-13 * problem.tau) break;
    if (mu == lo || mu == hi) break;  // bracket exhausted at double resolution
    if (sum < problem.tau) lo = mu; else hi = mu;
  }
  out.dual_mu = mu;
  out.lambda.resize(s.size());
  for (Eigen::Index c = 0; c < s.size(); ++c) out.lambda[c] = sigmoid((s[c] + mu) / eps);
  return out;
}

Mat soft_topk_jacobian(const SelectionWeights& weights, double eps_entropy) {
  const Vec& l = weights.lambda;
  const Vec g = l.cwiseProduct(Vec::Ones(l.size()) - l) / eps_entropy;
  const double gsum = g.sum();
  Mat J = g.asDiagonal();
  if (gsum > 0.0) J -= g * g.transpose() / gsum;
  return J;
}

Vec soft_topk_backward(const SelectionWeights& weights, double eps_entropy, const Vec& dlambda) {
  const Vec& l = weights.lambda;
  const Vec g = l.cwiseProduct(Vec::Ones(l.size()) - l) / eps_entropy;
  const double gsum = g.sum();
  const double proj = gsum > 0.0 ? g.dot(dlambda) / gsum : 0.0;
  return g.cwiseProduct(dlambda - Vec::Constant(l.size(), proj));
}

// ---------------------------------------------------------------------------

Mat align_tokens(const Mat& tokens, const Vec& lambda, const MlpParams& mlp, AlignCache* cache) {
  require(tokens.cols() == lambda.size(), ErrorKind::shape, "align_features: lambda length differs from channels");
  Mat selected = tokens * lambda.asDiagonal();
  Mat hidden = selected * mlp.W1;
  hidden.rowwise() += mlp.b1;
  hidden = hidden.array().tanh().matrix();
  Mat out = hidden * mlp.W2;
  out.rowwise() += mlp.b2;
  out += tokens;
  if (cache) {
    cache->selected = std::move(selected);
    cache->hidden = std::move(hidden);
  }
  return out;
}

AlignGrads align_tokens_backward(const Mat& tokens, const Vec& lambda, const MlpParams& mlp,
                                 const AlignCache& cache, const Mat& dout) {
  (void)lambda;
  AlignGrads g;
  g.dW2.noalias() = cache.hidden.transpose() * dout;
  g.db2 = dout.colwise().sum();
  Mat dpre = dout * mlp.W2.transpose();
  dpre.array() *= (1.0 - cache.hidden.array().square());
  g.dW1.noalias() = cache.selected.transpose() * dpre;
  g.db1 = dpre.colwise().sum();
  const Mat dselected = dpre * mlp.W1.transpose();
  g.dlambda = dselected.cwiseProduct(tokens).colwise().sum().transpose();
  return g;
}

FeatureGrid align_features(const FeatureGrid& bev, const Vec& lambda, const MlpParams& mlp) {
  FeatureGrid out(bev.time(), bev.channels(), bev.height(), bev.width());
  const Mat tokens = bev.token_matrix();
  out.token_matrix() = align_tokens(tokens, lambda, mlp);
  return out;
}

// ---------------------------------------------------------------------------

Mat stub_head(const Mat& tokens, const StubHeadParams& p, StubHeadCache* cache) {
  require(tokens.cols() == p.Wk.rows() && p.queries.cols() == p.Wq.rows(), ErrorKind::shape,
          "stub_head: feature dimension mismatch");
  // Keys and values are never materialised: (q Wk^T) tokens^T and (attn tokens) Wv.
  Mat q = p.queries * p.Wq;
  Mat qk = q * p.Wk.transpose();
  Mat attn = (qk * tokens.transpose()) / std::sqrt(static_cast<double>(q.cols()));
  softmax_rows(attn);
  Mat ctx = attn * tokens;
  Mat out = p.queries + ctx * p.Wv;
  if (cache) {
    cache->q = std::move(q);
    cache->qk = std::move(qk);
    cache->ctx = std::move(ctx);
    cache->attn = std::move(attn);
  }
  return out;
}

StubHeadGrads stub_head_backward(const Mat& tokens, const StubHeadParams& p,
                                 const StubHeadCache& cache, const Mat& dout) {
  StubHeadGrads g;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cache.q.cols()));
  const Mat dctx = dout * p.Wv.transpose();
  g.dWv.noalias() = cache.ctx.transpose() * dout;
  const Mat dattn = dctx * tokens.transpose();
  const Mat dscores = softmax_rows_backward(cache.attn, dattn) * scale;
  const Mat dqk = dscores * tokens;
  const Mat dq = dqk * p.Wk;
  g.dWk.noalias() = dqk.transpose() * cache.q;
  g.dWq.noalias() = p.queries.transpose() * dq;
  g.dqueries = dout + dq * p.Wq.transpose();
  g.dtokens = cache.attn.transpose() * dctx + dscores.transpose() * cache.qk;
  return g;
}

Mat stub_head(const FeatureGrid& aligned, PerceptionTask, const StubHeadParams& p) {
  const Mat tokens = aligned.frame_matrix(0);
  return stub_head(tokens, p);
}

EgoQuery build_ego_query(const Mat& agent_q, const Mat& map_q, const RowVec& ego_embed, std::size_t batch) {
  require(agent_q.cols() == map_q.cols() && map_q.cols() == ego_embed.cols(), ErrorKind::shape,
          "build_ego_query: agent, map and ego embedding widths differ");
  require(batch >= 1, ErrorKind::shape, "build_ego_query: batch must be positive");
  Mat seq(agent_q.rows() + map_q.rows() + 1, agent_q.cols());
  seq << agent_q, map_q, ego_embed;
  EgoQuery q;
  q.seq.assign(batch, seq);
  return q;
}

}  // namespace expertad
