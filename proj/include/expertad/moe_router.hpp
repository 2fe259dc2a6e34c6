#pragma once

#include <cstddef>
#include <vector>

#include "expertad/perception_adapter.hpp"
#include "expertad/random_stream.hpp"
#include "expertad/tensor.hpp"

namespace expertad {

struct GateParams {
  Mat W_gate;   // d x N
  Mat W_noise;  // d x N
  double eps_noise = 1e-2;
  std::size_t experts() const { return static_cast<std::size_t>(W_gate.cols()); }
};

enum class GateMode { train, eval };

/// Scene-level routing vectors: mean over the sequence axis, B x d.
Mat pool_for_routing(const EgoQuery& ego);

/// Values needed to differentiate the gate.
struct GateCache {
  Mat x;          // B x d
  Mat eta;        // B x N, zero in eval mode
  Mat noise_pre;  // x W_noise
};

/// g = x W_gate + eta * (softplus(x W_noise) + eps); eta ~ N(0, 1) per
/// (example, expert) in train mode, eta = 0 in eval mode. Draws advance `rng`.
Mat gate_logits(const Mat& x, const GateParams& params, GateMode mode, RandomStream& rng,
                GateCache* cache = nullptr);

struct GateGrads {
  Mat dW_gate, dW_noise, dx;
};
GateGrads gate_logits_backward(const GateParams& params, const GateCache& cache, const Mat& dlogits);

struct RoutingDecision {
  Vec logits;                         // N
  Vec probs;                          // softmax(logits)
  std::vector<std::size_t> selected;  // descending probability, ties to lowest index
  Vec scores;                         // R(x) entries for `selected`
  bool renormalized = false;
};

/// Softmax over all N logits, then keep the k largest probabilities. With
/// `renormalize` the kept scores are divided by their sum.
std::vector<RoutingDecision> route_topk(const Mat& logits, std::size_t k, bool renormalize = false);
RoutingDecision route_topk_row(const Vec& logits, std::size_t k, bool renormalize = false);

/// d(loss)/d(probs) for one decision, given d(loss)/d(scores).
Vec route_scores_backward(const RoutingDecision& decision, const Vec& dscores);
/// d(loss)/d(logits) from d(loss)/d(probs).
Vec route_probs_backward(const RoutingDecision& decision, const Vec& dprobs);

/// F_motion = sum_i R_i * F_bar_i over the selected experts. `outputs[i]`
/// belongs to decision.selected[i]; the fold runs in ascending expert index.
Mat mix_experts(const RoutingDecision& decision, const std::vector<Mat>& outputs);
/// Returns d(scores) and fills d(outputs).
Vec mix_experts_backward(const RoutingDecision& decision, const std::vector<Mat>& outputs, const Mat& dmotion,
                         std::vector<Mat>& doutputs);

struct LoadStats {
  Vec f;  // share of (example, slot) assignments per expert
  Vec P;  // mean routing probability per expert
};

LoadStats utilization_stats(const std::vector<RoutingDecision>& decisions);

}  // namespace expertad
