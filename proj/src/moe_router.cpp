#include "expertad/moe_router.hpp"

#include <algorithm>
#include <numeric>

#include "expertad/error.hpp"
#include "expertad/math_util.hpp"

namespace expertad {

Mat pool_for_routing(const EgoQuery& ego) {
  require(ego.batch() >= 1, ErrorKind::shape, "pool_for_routing: empty batch");
  Mat x(ego.batch(), ego.dim());
  for (std::size_t b = 0; b < ego.batch(); ++b) x.row(b) = ego.seq[b].colwise().mean();
  return x;
}

Mat gate_logits(const Mat& x, const GateParams& params, GateMode mode, RandomStream& rng, GateCache* cache) {
  require(x.cols() == params.W_gate.rows() && params.W_noise.rows() == params.W_gate.rows() &&
              params.W_noise.cols() == params.W_gate.cols(),
          ErrorKind::shape, "gate_logits: parameter shapes disagree with routing vectors");
  require(params.eps_noise > 0.0, ErrorKind::config, "gate_logits: eps_noise must be positive");
  Mat logits = x * params.W_gate;
  Mat eta = Mat::Zero(logits.rows(), logits.cols());
  Mat noise_pre;
  if (mode == GateMode::train) {
    noise_pre = x * params.W_noise;
    for (Eigen::Index b = 0; b < logits.rows(); ++b) {
      for (Eigen::Index n = 0; n < logits.cols(); ++n) {
        eta(b, n) = rng.next_normal();
        logits(b, n) += eta(b, n) * (softplus(noise_pre(b, n)) + params.eps_noise);
      }
    }
  }
  if (cache) {
    cache->x = x;
    cache->eta = std::move(eta);
    cache->noise_pre = std::move(noise_pre);
  }
  return logits;
}

GateGrads gate_logits_backward(const GateParams& params, const GateCache& cache, const Mat& dlogits) {
  GateGrads g;
  g.dW_gate.noalias() = cache.x.transpose() * dlogits;
  g.dx = dlogits * params.W_gate.transpose();
  if (cache.noise_pre.size() > 0) {
    Mat dpre(dlogits.rows(), dlogits.cols());
    for (Eigen::Index b = 0; b < dpre.rows(); ++b) {
      for (Eigen::Index n = 0; n < dpre.cols(); ++n) {
        dpre(b, n) = dlogits(b, n) * cache.eta(b, n) * sigmoid(cache.noise_pre(b, n));
      }
    }
    g.dW_noise.noalias() = cache.x.transpose() * dpre;
    g.dx += dpre * params.W_noise.transpose();
  } else {
    g.dW_noise = Mat::Zero(params.W_noise.rows(), params.W_noise.cols());
  }
  return g;
}

RoutingDecision route_topk_row(const Vec& logits, std::size_t k, bool renormalize) {
  const std::size_t N = logits.size();
  require(k >= 1 && k <= N, ErrorKind::config,
          "route_topk: k=" + std::to_string(k) + " outside [1, " + std::to_string(N) + "]");
  RoutingDecision d;
  d.logits = logits;
  Mat p = logits.transpose();
  softmax_rows(p);
  d.probs = p.row(0).transpose();
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d.probs[a] > d.probs[b]; });
  d.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  d.scores.resize(k);
  for (std::size_t i = 0; i < k; ++i) d.scores[i] = d.probs[d.selected[i]];
  d.renormalized = renormalize;
  if (renormalize) d.scores /= d.scores.sum();
  return d;
}

std::vector<RoutingDecision> route_topk(const Mat& logits, std::size_t k, bool renormalize) {
  std::vector<RoutingDecision> out;
  for (Eigen::Index b = 0; b < logits.rows(); ++b) out.push_back(route_topk_row(logits.row(b).transpose(), k, renormalize));
  return out;
}

Vec route_scores_backward(const RoutingDecision& decision, const Vec& dscores) {
  Vec dprobs = Vec::Zero(decision.probs.size());
  const std::size_t k = decision.selected.size();
  if (!decision.renormalized) {
    for (std::size_t i = 0; i < k; ++i) dprobs[decision.selected[i]] += dscores[i];
    return dprobs;
  }
  // score_i = p_i / S, S = sum of kept p.
  double S = 0.0;
  for (std::size_t i = 0; i < k; ++i) S += decision.probs[decision.selected[i]];
  const double inner = decision.scores.dot(dscores);
  for (std::size_t i = 0; i < k; ++i) dprobs[decision.selected[i]] += (dscores[i] - inner) / S;
  return dprobs;
}

Vec route_probs_backward(const RoutingDecision& decision, const Vec& dprobs) {
  const double inner = decision.probs.dot(dprobs);
  return decision.probs.cwiseProduct(dprobs - Vec::Constant(dprobs.size(), inner));
}

namespace {

std::vector<std::size_t> index_order(const RoutingDecision& decision) {
  std::vector<std::size_t> slots(decision.selected.size());
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  std::sort(slots.begin(), slots.end(),
            [&](std::size_t a, std::size_t b) { return decision.selected[a] < decision.selected[b]; });
  return slots;
}

}  // namespace

Mat mix_experts(const RoutingDecision& decision, const std::vector<Mat>& outputs) {
  require(outputs.size() == decision.selected.size() && !outputs.empty(), ErrorKind::shape,
          "mix_experts: " + std::to_string(outputs.size()) + " outputs for " +
              std::to_string(decision.selected.size()) + " selected experts");
  Mat motion = Mat::Zero(outputs.front().rows(), outputs.front().cols());
  for (std::size_t slot : index_order(decision)) {
    require(outputs[slot].rows() == motion.rows() && outputs[slot].cols() == motion.cols(), ErrorKind::shape,
            "mix_experts: expert outputs differ in shape");
    motion += decision.scores[slot] * outputs[slot];
  }
  return motion;
}

Vec mix_experts_backward(const RoutingDecision& decision, const std::vector<Mat>& outputs, const Mat& dmotion,
                         std::vector<Mat>& doutputs) {
  const std::size_t k = decision.selected.size();
  Vec dscores(k);
  doutputs.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    dscores[i] = outputs[i].cwiseProduct(dmotion).sum();
    doutputs[i] = decision.scores[i] * dmotion;
  }
  return dscores;
}

LoadStats utilization_stats(const std::vector<RoutingDecision>& decisions) {
  require(!decisions.empty(), ErrorKind::shape, "utilization_stats: empty batch");
  const std::size_t N = decisions.front().probs.size();
  const std::size_t k = decisions.front().selected.size();
  LoadStats st;
  st.f = Vec::Zero(N);
  st.P = Vec::Zero(N);
  for (const auto& d : decisions) {
    require(d.selected.size() == k && static_cast<std::size_t>(d.probs.size()) == N, ErrorKind::shape,
            "utilization_stats: decisions disagree on k or N");
    for (std::size_t i : d.selected) st.f[i] += 1.0;
    st.P += d.probs;
  }
  const auto B = static_cast<double>(decisions.size());
  st.f /= B * static_cast<double>(k);
  st.P /= B;
  return st;
}

}  // namespace expertad
