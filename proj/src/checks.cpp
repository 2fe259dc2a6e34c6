#include "expertad/checks.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <set>

#include "expertad/error.hpp"

namespace expertad {
namespace {

Mat gaussian(RandomStream& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = sd * rng.next_normal();
  }
  return m;
}

std::vector<std::size_t> pick_coordinates(const Mat& analytic, std::size_t max_coords, RandomStream rng) {
  const auto n = static_cast<std::size_t>(analytic.size());
  if (n <= max_coords) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  std::set<std::size_t> picked;
  Eigen::Index best = 0;
  analytic.cwiseAbs().reshaped<Eigen::RowMajor>().maxCoeff(&best);
  picked.insert(static_cast<std::size_t>(best));
  while (picked.size() < max_coords + 1) picked.insert(rng.next_index(n));
  return {picked.begin(), picked.end()};
}

// Perturbs `target` in place through check_gradient and restores it.
GradReport check_matrix(Mat& target, const Mat& analytic, const std::function<double()>& loss,
                        std::size_t max_coords, RandomStream rng) {
  require(target.rows() == analytic.rows() && target.cols() == analytic.cols(), ErrorKind::shape,
          "check_matrix: analytic gradient shape differs from the parameter");
  const Mat saved = target;
  const std::vector<double> point(saved.data(), saved.data() + saved.size());
  const std::vector<double> grad(analytic.data(), analytic.data() + analytic.size());
  const auto coords = pick_coordinates(analytic, max_coords, rng);
  auto fn = [&](std::span<const double> x) {
    std::copy(x.begin(), x.end(), target.data());
    return loss();
  };
  GradReport r = check_gradient(fn, point, grad, kGradStep, kGradTolerance, coords);
  target = saved;
  return r;
}

double contract(const Mat& a, const Mat& c) { return a.cwiseProduct(c).sum(); }

}  // namespace

std::vector<NamedReport> check_learnable_ops(std::uint64_t seed) {
  RandomStream rng = seeded_stream(seed, "op-checks");
  std::vector<NamedReport> out;
  const std::size_t kMax = 40;
  auto add = [&](const std::string& name, Mat& target, const Mat& analytic, const std::function<double()>& loss) {
    out.push_back({name, check_matrix(target, analytic, loss, kMax, rng.fork(name))});
  };

  // soft_topk
  {
    Mat s = gaussian(rng, 12, 1);
    const Mat c = gaussian(rng, 12, 1);
    const double tau = 3.0, eps = 0.3;
    auto loss = [&] { return contract(soft_topk({s.col(0), tau, eps}).lambda, c); };
    const Vec ds = soft_topk_backward(soft_topk({s.col(0), tau, eps}), eps, c.col(0));
    add("soft_topk.s", s, ds, loss);
  }

  // alignment layer
  {
    const Eigen::Index n = 5, d = 6;
    const Mat X = gaussian(rng, n, d);
    Mat lambda = gaussian(rng, d, 1, 0.3).array().abs().matrix();
    MlpParams mlp{gaussian(rng, d, d, 0.5), gaussian(rng, d, d, 0.5), gaussian(rng, 1, d, 0.1),
                  gaussian(rng, 1, d, 0.1)};
    const Mat C = gaussian(rng, n, d);
    auto loss = [&] { return contract(align_tokens(X, lambda.col(0), mlp), C); };
    AlignCache cache;
    align_tokens(X, lambda.col(0), mlp, &cache);
    const AlignGrads g = align_tokens_backward(X, lambda.col(0), mlp, cache, C);
    add("align.W1", mlp.W1, g.dW1, loss);
    add("align.W2", mlp.W2, g.dW2, loss);
    Mat b1 = mlp.b1, b2 = mlp.b2;
    auto loss_b = [&] {
      MlpParams m = mlp;
      m.b1 = b1;
      m.b2 = b2;
      return contract(align_tokens(X, lambda.col(0), m), C);
    };
    add("align.b1", b1, g.db1, loss_b);
    add("align.b2", b2, g.db2, loss_b);
    add("align.lambda", lambda, g.dlambda, loss);
  }

  // stub head
  {
    const Eigen::Index S = 7, L = 3, d = 6;
    Mat tokens = gaussian(rng, S, d);
    StubHeadParams p{gaussian(rng, L, d), gaussian(rng, d, d, 0.5), gaussian(rng, d, d, 0.5),
                     gaussian(rng, d, d, 0.5)};
    const Mat C = gaussian(rng, L, d);
    auto loss = [&] { return contract(stub_head(tokens, p), C); };
    StubHeadCache cache;
    stub_head(tokens, p, &cache);
    const StubHeadGrads g = stub_head_backward(tokens, p, cache, C);
    add("stub_head.queries", p.queries, g.dqueries, loss);
    add("stub_head.Wq", p.Wq, g.dWq, loss);
    add("stub_head.Wk", p.Wk, g.dWk, loss);
    add("stub_head.Wv", p.Wv, g.dWv, loss);
    add("stub_head.tokens", tokens, g.dtokens, loss);
  }

  // modality embeddings
  {
    const Eigen::Index d = 6, L = 5;
    for (const auto& spec : default_bank(static_cast<std::size_t>(d))) {
      if (spec.name != "Tracking" && spec.name != "Velocity" && spec.name != "Command" && spec.name != "BEV") continue;
      RawModality raw;
      raw.modality = spec.modality;
      EmbeddingParams p;
      if (spec.modality == Modality::text_command) {
        raw.tokens = {Command::left, Command::right, Command::right, Command::straight, Command::left};
        p.table = gaussian(rng, static_cast<Eigen::Index>(kCommandCount), d);
      } else {
        const auto w = static_cast<Eigen::Index>(spec.raw_width);
        raw.values = gaussian(rng, L, w);
        p.W = gaussian(rng, w, d);
        p.b = gaussian(rng, 1, d, 0.1);
      }
      const Mat C = gaussian(rng, L, d);
      auto loss = [&] { return contract(embed_modality(raw, spec, p), C); };
      EmbeddingCache cache;
      embed_modality(raw, spec, p, &cache);
      const EmbeddingGrads g = embed_modality_backward(raw, spec, p, cache, C);
      const std::string pre = "embed." + to_string(spec.modality);
      if (spec.modality == Modality::text_command) {
        add(pre + ".table", p.table, g.dtable, loss);
      } else {
        add(pre + ".W", p.W, g.dW, loss);
        Mat b = p.b;
        auto loss_b = [&] {
          EmbeddingParams q = p;
          q.b = b;
          return contract(embed_modality(raw, spec, q), C);
        };
        add(pre + ".b", b, g.db, loss_b);
        add(pre + ".raw", raw.values, g.draw, loss);
      }
    }
  }

  // sparse attention, one check per pattern family
  {
    const Eigen::Index Lq = 5, Lkv = 7, d = 8;
    const std::size_t heads = 2;
    for (const auto& pattern : {AttentionPattern::dense(), AttentionPattern::block(2), AttentionPattern::window(1),
                                AttentionPattern::topk(3)}) {
      AttentionInputs in{gaussian(rng, Lq, d), gaussian(rng, Lkv, d), gaussian(rng, Lkv, d), heads};
      AttentionProjections proj{gaussian(rng, d, d, 0.4), gaussian(rng, d, d, 0.4), gaussian(rng, d, d, 0.4),
                                gaussian(rng, d, d, 0.4), gaussian(rng, 1, d, 0.1)};
      const Mat C = gaussian(rng, Lq, d);
      AttentionCache cache;
      sparse_mhca(in, pattern, proj, nullptr, &cache);
      const AttentionGrads g = sparse_mhca_backward(in, proj, cache, C);
      const std::string pre = "attention." + to_string(pattern);
      auto loss = [&] { return contract(sparse_mhca(in, pattern, proj), C); };
      add(pre + ".Wq", proj.Wq, g.dWq, loss);
      add(pre + ".Wk", proj.Wk, g.dWk, loss);
      add(pre + ".Wv", proj.Wv, g.dWv, loss);
      add(pre + ".Wo", proj.Wo, g.dWo, loss);
      Mat bo = proj.bo;
      auto loss_b = [&] {
        AttentionProjections p2 = proj;
        p2.bo = bo;
        return contract(sparse_mhca(in, pattern, p2), C);
      };
      add(pre + ".bo", bo, g.dbo, loss_b);
      add(pre + ".Q", in.Q, g.dQ, loss);
      add(pre + ".K", in.K, g.dK, loss);
      add(pre + ".V", in.V, g.dV, loss);
    }
  }

  // gate, routing and mixture
  {
    const Eigen::Index B = 3, d = 5, N = 6;
    const std::size_t k = 3;
    GateParams gate{gaussian(rng, d, N, 0.7), gaussian(rng, d, N, 0.3), 1e-2};
    Mat x = gaussian(rng, B, d);
    const RandomStream noise = rng.fork("gate-noise");
    const Mat C = gaussian(rng, B, N);
    auto gate_loss = [&] {
      RandomStream r = noise;
      return contract(gate_logits(x, gate, GateMode::train, r), C);
    };
    RandomStream r = noise;
    GateCache cache;
    gate_logits(x, gate, GateMode::train, r, &cache);
    const GateGrads g = gate_logits_backward(gate, cache, C);
    add("gate.W_gate", gate.W_gate, g.dW_gate, gate_loss);
    add("gate.W_noise", gate.W_noise, g.dW_noise, gate_loss);
    add("gate.x", x, g.dx, gate_loss);

    for (bool renorm : {false, true}) {
      Mat logits = gaussian(rng, N, 1, 1.5);
      const Mat cs = gaussian(rng, static_cast<Eigen::Index>(k), 1);
      const Mat cp = gaussian(rng, N, 1);
      auto loss = [&] {
        const RoutingDecision dec = route_topk_row(logits.col(0), k, renorm);
        return contract(dec.scores, cs) + contract(dec.probs, cp);
      };
      const RoutingDecision dec = route_topk_row(logits.col(0), k, renorm);
      const Vec dprobs = route_scores_backward(dec, cs.col(0)) + cp.col(0);
      add(renorm ? "route.renormalized.logits" : "route.logits", logits, route_probs_backward(dec, dprobs), loss);
    }

    const RoutingDecision dec = route_topk_row(gaussian(rng, N, 1, 1.5).col(0), k);
    std::vector<Mat> outputs;
    for (std::size_t i = 0; i < k; ++i) outputs.push_back(gaussian(rng, 4, d));
    const Mat Cm = gaussian(rng, 4, d);
    std::vector<Mat> douts;
    const Vec dscores = mix_experts_backward(dec, outputs, Cm, douts);
    Mat scores = dec.scores;
    auto mix_loss = [&] {
      RoutingDecision d2 = dec;
      d2.scores = scores.col(0);
      return contract(mix_experts(d2, outputs), Cm);
    };
    add("mix.scores", scores, dscores, mix_loss);
    add("mix.output0", outputs[0], douts[0], mix_loss);
  }
  return out;
}

std::vector<NamedReport> check_end_to_end(const Model& model, const std::vector<const PreparedScenario*>& probe,
                                          std::size_t coords_per_group, std::uint64_t seed) {
  require(!probe.empty(), ErrorKind::shape, "check_end_to_end: empty probe batch");
  const RandomStream noise_root = seeded_stream(seed, "gradcheck-noise");
  auto streams = [&] {
    std::vector<RandomStream> s;
    for (std::size_t b = 0; b < probe.size(); ++b) s.push_back(noise_root.fork(b));
    return s;
  };
  Model work = model;
  ParamStore grads = zeros_like(work.params);
  {
    auto s = streams();
    run_batch(work, probe, GateMode::train, s, &grads);
  }
  auto loss = [&] {
    auto s = streams();
    return run_batch(work, probe, GateMode::train, s).loss.total;
  };
  const RandomStream pick = seeded_stream(seed, "gradcheck-coords");
  std::vector<NamedReport> out;
  for (auto& [name, value] : work.params) {
    out.push_back({name, check_matrix(value, grads.at(name), loss, coords_per_group, pick.fork(name))});
  }
  return out;
}

}  // namespace expertad
