#include "expertad/model.hpp"

#include <cmath>

#include "expertad/error.hpp"

namespace expertad {
namespace {

constexpr double kAlignGain = 2.0;
constexpr double kPositionScale = 0.5;
constexpr double kGateScale = 0.1;
constexpr double kNominalSpeed = 5.0;  // m/s

Mat gaussian(RandomStream rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * rng.next_normal();
  }
  return m;
}

const Mat& param(const ParamStore& p, const std::string& name) {
  const auto it = p.find(name);
  require(it != p.end(), ErrorKind::shape, "missing parameter '" + name + "'");
  return it->second;
}

Mat& grad(ParamStore& g, const std::string& name) {
  const auto it = g.find(name);
  require(it != g.end(), ErrorKind::shape, "missing gradient slot '" + name + "'");
  return it->second;
}

std::string task_prefix(std::size_t t) { return std::string("adapter.") + kTaskNames[t]; }
std::string head_prefix(std::size_t t) { return std::string("head.") + kTaskNames[t]; }
std::string expert_prefix(const ExpertSpec& spec) { return "expert." + spec.name; }

MlpParams mlp_params(const ParamStore& p, std::size_t t) {
  const auto pre = task_prefix(t);
  return {param(p, pre + ".W1"), param(p, pre + ".W2"), param(p, pre + ".b1"), param(p, pre + ".b2")};
}

StubHeadParams head_params(const ParamStore& p, std::size_t t) {
  const auto pre = head_prefix(t);
  return {param(p, pre + ".queries"), param(p, pre + ".Wq"), param(p, pre + ".Wk"), param(p, pre + ".Wv")};
}

EmbeddingParams embedding_params(const ParamStore& p, const ExpertSpec& spec) {
  const auto pre = expert_prefix(spec);
  EmbeddingParams e;
  if (spec.modality == Modality::text_command) {
    e.table = param(p, pre + ".table");
  } else {
    e.W = param(p, pre + ".embed.W");
    e.b = param(p, pre + ".embed.b");
  }
  return e;
}

AttentionProjections attention_params(const ParamStore& p, const ExpertSpec& spec) {
  const auto pre = expert_prefix(spec);
  return {param(p, pre + ".Wq"), param(p, pre + ".Wk"), param(p, pre + ".Wv"), param(p, pre + ".Wo"),
          param(p, pre + ".bo")};
}

GateParams gate_params(const Model& m) {
  return {param(m.params, "router.W_gate"), param(m.params, "router.W_noise"), m.config.router.eps_noise};
}

ExpertContext expert_context(const Model& m, const PreparedScenario& prep, const Mat& mapping_aligned) {
  ExpertContext ctx;
  ctx.scenario = prep.scenario;
  ctx.aligned_tokens = &mapping_aligned;
  ctx.H = m.config.scenario.H;
  ctx.W = m.config.scenario.W;
  ctx.length = m.config.model.expert_len;
  return ctx;
}

Mat grid_tokens(const FeatureGrid& g) { return Mat(g.frame_matrix(0)); }

}  // namespace

bool is_router_param(const std::string& name) { return name.rfind("router.", 0) == 0; }

Model init_model(const RunConfig& config) {
  config.validate();
  Model m;
  m.config = config;
  m.bank = default_bank(config.scenario.d, config.patterns);
  const auto d = static_cast<Eigen::Index>(config.scenario.d);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const RandomStream init = seeded_stream(config.seed, "init");
  auto& p = m.params;
  auto draw = [&](const std::string& name, Eigen::Index r, Eigen::Index c, double sd) {
    p[name] = gaussian(init.fork(name), r, c, sd);
  };

  for (std::size_t t = 0; t < kTaskNames.size(); ++t) {
    const auto a = task_prefix(t);
    p[a + ".w"] = Mat::Ones(1, d);
    // Near-identity start: MLP(BEV * lambda) ~ kAlignGain * lambda * BEV.
    draw(a + ".W1", d, d, 0.1 * inv_sqrt_d);
    p[a + ".W1"] += Mat::Identity(d, d);
    draw(a + ".W2", d, d, 0.1 * inv_sqrt_d);
    p[a + ".W2"] += kAlignGain * Mat::Identity(d, d);
    p[a + ".b1"] = Mat::Zero(1, d);
    p[a + ".b2"] = Mat::Zero(1, d);
    const auto h = head_prefix(t);
    const auto L = static_cast<Eigen::Index>(t == 0 ? config.model.agent_queries : config.model.map_queries);
    draw(h + ".queries", L, d, 1.0);
    draw(h + ".Wq", d, d, inv_sqrt_d);
    draw(h + ".Wk", d, d, inv_sqrt_d);
    draw(h + ".Wv", d, d, inv_sqrt_d);
  }
  draw("ego.embed", 1, d, 1.0);

  for (const auto& spec : m.bank) {
    const auto e = expert_prefix(spec);
    if (spec.modality == Modality::text_command) {
      draw(e + ".table", static_cast<Eigen::Index>(kCommandCount), d, 1.0);
    } else {
      const auto w = static_cast<Eigen::Index>(spec.raw_width);
      draw(e + ".embed.W", w, d, 1.0 / std::sqrt(static_cast<double>(w)));
      p[e + ".embed.b"] = Mat::Zero(1, d);
    }
    draw(e + ".pos", static_cast<Eigen::Index>(config.model.expert_len), d, kPositionScale);
    for (const char* n : {".Wq", ".Wk", ".Wv", ".Wo"}) draw(e + n, d, d, inv_sqrt_d);
    p[e + ".bo"] = Mat::Zero(1, d);
  }

  const auto N = static_cast<Eigen::Index>(config.router.experts);
  draw("router.W_gate", d, N, kGateScale * inv_sqrt_d);
  p["router.W_noise"] = Mat::Zero(d, N);

  const auto hid = static_cast<Eigen::Index>(config.model.planner_hidden);
  const auto out = static_cast<Eigen::Index>(2 * config.scenario.horizon);
  draw("planner.W1", d, hid, inv_sqrt_d);
  p["planner.b1"] = Mat::Zero(1, hid);
  draw("planner.W2", hid, out, 1.0 / std::sqrt(static_cast<double>(hid)));
  // Heads start at a straight constant-speed rollout.
  const double dt = config.scenario.dt;
  p["planner.b2"] = Mat::Zero(1, out);
  for (Eigen::Index s = 0; s < out / 2; ++s) p["planner.b2"](0, 2 * s) = kNominalSpeed * dt * static_cast<double>(s + 1);
  draw("predictor.W", d, 4, inv_sqrt_d);
  p["predictor.b"] = Mat::Zero(1, 4);
  p["predictor.b"](0, 0) = kNominalSpeed * dt;
  p["predictor.b"](0, 3) = kNominalSpeed;
  return m;
}

ParamStore zeros_like(const ParamStore& params) {
  ParamStore z;
  for (const auto& [name, m] : params) z[name] = Mat::Zero(m.rows(), m.cols());
  return z;
}

PreparedScenario prepare_scenario(const Scenario& sc) {
  PreparedScenario prep;
  prep.scenario = &sc;
  const StandardizedBEV st = standardize_bev(sc.bev_seq);
  const FeatureGrid pooled = temporal_mean(st.seq);
  prep.tokens = grid_tokens(pooled);
  prep.means = channel_means(pooled);
  FeatureGrid clean = sc.clean_signal;
  for (double& x : clean.data()) {
    x -= st.mean;
    if (!st.zero_variance) x /= st.stddev;
  }
  prep.clean = grid_tokens(clean);
  return prep;
}

ScenarioOutput forward_scenario(const Model& model, const PreparedScenario& prep, GateMode mode,
                                RandomStream& noise, ForwardCache* cache, FlopTrace* expert_trace) {
  const RunConfig& cfg = model.config;
  const auto& P = model.params;
  const Scenario& sc = *prep.scenario;
  require(prep.tokens.cols() == static_cast<Eigen::Index>(cfg.scenario.d) &&
              prep.tokens.rows() == static_cast<Eigen::Index>(cfg.scenario.H * cfg.scenario.W),
          ErrorKind::shape, "forward: scenario dimensions differ from the model config");
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  ScenarioOutput out;

  for (std::size_t t = 0; t < kTaskNames.size(); ++t) {
    TaskCache& tc = c.tasks[t];
    const Vec w = param(P, task_prefix(t) + ".w").row(0).transpose();
    tc.s = prep.means.cwiseProduct(w);
    tc.selection = soft_topk({tc.s, cfg.adapter.tau, cfg.adapter.eps_entropy});
    tc.aligned = align_tokens(prep.tokens, tc.selection.lambda, mlp_params(P, t), &tc.align);
    tc.head_out = stub_head(tc.aligned, head_params(P, t), &tc.head);
    out.perception += perception_loss(tc.aligned, prep.clean, sc.planted);
  }
  out.perception /= static_cast<double>(kTaskNames.size());

  const RowVec ego_embed = param(P, "ego.embed");
  c.ego.resize(c.tasks[0].head_out.rows() + c.tasks[1].head_out.rows() + 1, ego_embed.cols());
  c.ego << c.tasks[0].head_out, c.tasks[1].head_out, ego_embed;
  const EgoQuery ego{{c.ego}};

  const GateParams gate = gate_params(model);
  const Mat logits = gate_logits(pool_for_routing(ego), gate, mode, noise, &c.gate);
  c.decision = route_topk_row(logits.row(0).transpose(), cfg.router.k, cfg.router.renormalize_topk);

  const ExpertContext ctx = expert_context(model, prep, c.tasks[1].aligned);
  c.experts.assign(c.decision.selected.size(), ExpertCache{});
  std::vector<Mat> outputs;
  for (std::size_t slot = 0; slot < c.decision.selected.size(); ++slot) {
    ExpertCache& ec = c.experts[slot];
    ec.expert = c.decision.selected[slot];
    const ExpertSpec& spec = model.bank[ec.expert];
    ec.raw = extract_raw(spec, ctx);
    ec.embedding = embed_modality(ec.raw, spec, embedding_params(P, spec), &ec.embedding_cache) +
                   param(P, expert_prefix(spec) + ".pos");
    ExpertOutput eo = expert_forward(ego, ec.embedding, spec, attention_params(P, spec), cfg.model.heads,
                                     expert_trace, &ec.attention, cfg.model.dense_baseline);
    ec.out = std::move(eo.seq.front());
    outputs.push_back(ec.out);
  }
  c.motion = mix_experts(c.decision, outputs);
  c.motion_mean = c.motion.colwise().mean();
  const double mu = c.motion_mean.mean();
  c.pooled_scale = 1.0 / std::sqrt((c.motion_mean.array() - mu).square().mean() + kNormEps);
  c.pooled = (c.motion_mean.array() - mu) * c.pooled_scale;

  c.hidden = c.pooled * param(P, "planner.W1") + RowVec(param(P, "planner.b1"));
  c.hidden = c.hidden.array().tanh().matrix();
  c.plan = c.hidden * param(P, "planner.W2") + RowVec(param(P, "planner.b2"));
  const RowVec next = c.pooled * param(P, "predictor.W") + RowVec(param(P, "predictor.b"));
  c.next_state = next.transpose();

  out.trajectory.resize(cfg.scenario.horizon);
  for (std::size_t s = 0; s < out.trajectory.size(); ++s) {
    out.trajectory[s] = {c.plan(0, 2 * s), c.plan(0, 2 * s + 1)};
  }
  out.next_state = c.next_state;
  out.planning = planning_loss(out.trajectory, sc.gt_future);
  out.prediction = prediction_loss(out.next_state, sc.gt_states.front());
  out.decision = c.decision;
  return out;
}

namespace {

// Backward of one scenario given upstream weights on its loss parts and the
// switch-loss gradient on its routing probabilities.
void backward_scenario(const Model& model, const PreparedScenario& prep, const ForwardCache& c,
                       double w_perception, double w_prediction, double w_planning, const Vec& dprobs_switch,
                       ParamStore& g) {
  const RunConfig& cfg = model.config;
  const auto& P = model.params;
  const Scenario& sc = *prep.scenario;
  const std::size_t horizon = cfg.scenario.horizon;

  // Planner and prediction heads.
  RowVec dplan(2 * horizon);
  for (std::size_t s = 0; s < horizon; ++s) {
    dplan[2 * s] = w_planning * 2.0 * (c.plan(0, 2 * s) - sc.gt_future[s].x) / static_cast<double>(horizon);
    dplan[2 * s + 1] = w_planning * 2.0 * (c.plan(0, 2 * s + 1) - sc.gt_future[s].y) / static_cast<double>(horizon);
  }
  grad(g, "planner.W2").noalias() += c.hidden.transpose() * dplan;
  grad(g, "planner.b2") += dplan;
  RowVec dhidden = dplan * param(P, "planner.W2").transpose();
  dhidden.array() *= (1.0 - c.hidden.array().square());
  grad(g, "planner.W1").noalias() += c.pooled.transpose() * dhidden;
  grad(g, "planner.b1") += dhidden;
  RowVec dpooled = dhidden * param(P, "planner.W1").transpose();

  const RowVec dnext = (w_prediction * 2.0 * (c.next_state - prediction_target(sc.gt_states.front()))).transpose();
  grad(g, "predictor.W").noalias() += c.pooled.transpose() * dnext;
  grad(g, "predictor.b") += dnext;
  dpooled += dnext * param(P, "predictor.W").transpose();

  // Mixture and router.
  const auto L = c.motion.rows();
  const double mdy = dpooled.mean();
  const double mdyy = dpooled.dot(c.pooled) / static_cast<double>(dpooled.size());
  const RowVec dmean = c.pooled_scale * (dpooled.array() - mdy - c.pooled.array() * mdyy);
  const Mat dmotion = dmean.replicate(L, 1) / static_cast<double>(L);
  std::vector<Mat> outputs;
  for (const auto& ec : c.experts) outputs.push_back(ec.out);
  std::vector<Mat> doutputs;
  const Vec dscores = mix_experts_backward(c.decision, outputs, dmotion, doutputs);
  Vec dprobs = route_scores_backward(c.decision, dscores);
  dprobs += dprobs_switch;
  const Vec dlogits = route_probs_backward(c.decision, dprobs);
  const GateGrads gg = gate_logits_backward(gate_params(model), c.gate, dlogits.transpose());
  grad(g, "router.W_gate") += gg.dW_gate;
  grad(g, "router.W_noise") += gg.dW_noise;
  Mat dego = Mat::Ones(L, 1) * (gg.dx / static_cast<double>(L));

  // Experts.
  const ExpertContext ctx = expert_context(model, prep, c.tasks[1].aligned);
  std::array<Mat, 2> daligned;
  for (std::size_t t = 0; t < 2; ++t) daligned[t] = Mat::Zero(c.tasks[t].aligned.rows(), c.tasks[t].aligned.cols());
  for (std::size_t slot = 0; slot < c.experts.size(); ++slot) {
    const ExpertCache& ec = c.experts[slot];
    const ExpertSpec& spec = model.bank[ec.expert];
    const auto pre = expert_prefix(spec);
    const AttentionProjections proj = attention_params(P, spec);
    const AttentionInputs in{c.ego, ec.embedding, ec.embedding, cfg.model.heads};
    const AttentionGrads ag = sparse_mhca_backward(in, proj, ec.attention.front(), doutputs[slot]);
    grad(g, pre + ".Wq") += ag.dWq;
    grad(g, pre + ".Wk") += ag.dWk;
    grad(g, pre + ".Wv") += ag.dWv;
    grad(g, pre + ".Wo") += ag.dWo;
    grad(g, pre + ".bo") += ag.dbo;
    dego += ag.dQ;
    const Mat demb = ag.dK + ag.dV;
    grad(g, pre + ".pos") += demb;
    const EmbeddingParams ep = embedding_params(P, spec);
    const EmbeddingGrads eg = embed_modality_backward(ec.raw, spec, ep, ec.embedding_cache, demb);
    if (spec.modality == Modality::text_command) {
      grad(g, pre + ".table") += eg.dtable;
    } else {
      grad(g, pre + ".embed.W") += eg.dW;
      grad(g, pre + ".embed.b") += eg.db;
      extract_raw_backward(spec, ctx, eg.draw, daligned[1]);
    }
  }

  // Ego query rows: agent, map, ego embedding.
  const auto La = c.tasks[0].head_out.rows(), Lm = c.tasks[1].head_out.rows();
  grad(g, "ego.embed") += dego.row(La + Lm);
  const double perc_scale =
      w_perception * 2.0 / static_cast<double>(kTaskNames.size() * sc.planted.size() * prep.tokens.rows());
  for (std::size_t t = 0; t < 2; ++t) {
    const TaskCache& tc = c.tasks[t];
    const Mat dhead = t == 0 ? Mat(dego.topRows(La)) : Mat(dego.middleRows(La, Lm));
    const StubHeadParams hp = head_params(P, t);
    const StubHeadGrads hg = stub_head_backward(tc.aligned, hp, tc.head, dhead);
    const auto hpre = head_prefix(t);
    grad(g, hpre + ".queries") += hg.dqueries;
    grad(g, hpre + ".Wq") += hg.dWq;
    grad(g, hpre + ".Wk") += hg.dWk;
    grad(g, hpre + ".Wv") += hg.dWv;
    daligned[t] += hg.dtokens;
    for (std::size_t ch : sc.planted) {
      daligned[t].col(ch) += perc_scale * (tc.aligned.col(ch) - prep.clean.col(ch));
    }
    const MlpParams mlp = mlp_params(P, t);
    const AlignGrads al = align_tokens_backward(prep.tokens, tc.selection.lambda, mlp, tc.align, daligned[t]);
    const auto apre = task_prefix(t);
    grad(g, apre + ".W1") += al.dW1;
    grad(g, apre + ".W2") += al.dW2;
    grad(g, apre + ".b1") += al.db1;
    grad(g, apre + ".b2") += al.db2;
    const Vec ds = soft_topk_backward(tc.selection, cfg.adapter.eps_entropy, al.dlambda);
    grad(g, apre + ".w") += ds.cwiseProduct(prep.means).transpose();
  }
}

}  // namespace

BatchResult run_batch(const Model& model, const std::vector<const PreparedScenario*>& batch, GateMode mode,
                      std::vector<RandomStream>& noise, ParamStore* grads) {
  require(!batch.empty(), ErrorKind::shape, "run_batch: empty batch");
  require(noise.size() == batch.size(), ErrorKind::shape, "run_batch: one noise stream per example required");
  const auto B = static_cast<double>(batch.size());
  std::vector<ForwardCache> caches(grads ? batch.size() : 0);
  BatchResult res;
  std::vector<RoutingDecision> decisions;
  double perception = 0.0, prediction = 0.0, planning = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    res.outputs.push_back(forward_scenario(model, *batch[b], mode, noise[b], grads ? &caches[b] : nullptr));
    const auto& o = res.outputs.back();
    perception += o.perception;
    prediction += o.prediction;
    planning += o.planning;
    decisions.push_back(o.decision);
  }
  res.stats = utilization_stats(decisions);
  const LossWeights& w = model.config.loss;
  res.loss = total_loss(perception / B, prediction / B, planning / B, switch_loss(res.stats), w);
  require(std::isfinite(res.loss.total), ErrorKind::numerical, "non-finite training loss");

  if (grads) {
    const double N = static_cast<double>(res.stats.f.size());
    const Vec dprobs_switch = (w.alpha4 * N / B) * res.stats.f;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      backward_scenario(model, *batch[b], caches[b], w.alpha1 / B, w.alpha2 / B, w.alpha3 / B, dprobs_switch,
                        *grads);
    }
  }
  return res;
}

}  // namespace expertad
