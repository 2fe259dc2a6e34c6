#include "expertad/expert_bank.hpp"

#include <cmath>
#include <utility>

#include "expertad/error.hpp"

namespace expertad {

std::string to_string(ExpertCategory c) {
  switch (c) {
    case ExpertCategory::Environmental: return "Environmental";
    case ExpertCategory::EgoState: return "EgoState";
    case ExpertCategory::Navigation: return "Navigation";
  }
  return "?";
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::geometric: return "geometric";
    case Modality::time_series: return "time_series";
    case Modality::text_command: return "text_command";
    case Modality::grid: return "grid";
    case Modality::waypoint: return "waypoint";
  }
  return "?";
}

AttentionPattern::Kind pattern_family(ExpertCategory c) {
  switch (c) {
    case ExpertCategory::Environmental: return AttentionPattern::Kind::block;
    case ExpertCategory::EgoState: return AttentionPattern::Kind::window;
    case ExpertCategory::Navigation: return AttentionPattern::Kind::topk;
  }
  return AttentionPattern::Kind::dense;
}

std::vector<ExpertSpec> default_bank(std::size_t d, const PatternDefaults& p) {
  const auto block = AttentionPattern::block(p.block_m);
  const auto window = AttentionPattern::window(p.window_w);
  const auto topk = AttentionPattern::topk(p.topk_k);
  using C = ExpertCategory;
  using M = Modality;
  return {
      {"Tracking", C::Environmental, block, M::geometric, 3},
      {"Mapping", C::Environmental, block, M::geometric, d},
      {"Velocity", C::EgoState, window, M::time_series, 1},
      {"Yaw", C::EgoState, window, M::time_series, 1},
      {"Acceleration", C::EgoState, window, M::time_series, 1},
      {"ReferencePoint", C::Navigation, topk, M::waypoint, 2},
      {"BEV", C::Navigation, topk, M::grid, d},
      {"Command", C::Navigation, topk, M::text_command, 0},
  };
}

namespace {

std::size_t source_index(std::size_t r, std::size_t n, std::size_t len) { return r * n / len; }

// Half-open band [lo, hi) of n source lines assigned to output row r.
std::pair<std::size_t, std::size_t> band(std::size_t r, std::size_t n, std::size_t len) {
  return {r * n / len, (r + 1) * n / len};
}

}  // namespace

RawModality extract_raw(const ExpertSpec& spec, const ExpertContext& ctx) {
  require(ctx.scenario != nullptr, ErrorKind::shape, "extract_raw: no scenario");
  require(ctx.length >= 1, ErrorKind::config, "extract_raw: expert length must be positive");
  const Scenario& sc = *ctx.scenario;
  const std::size_t len = ctx.length;
  RawModality raw;
  raw.modality = spec.modality;
  const auto& name = spec.name;
  if (name == "Tracking") {
    const std::size_t n_obs = sc.obstacles.size();
    require(n_obs >= 1, ErrorKind::shape, "extract_raw: Tracking needs at least one obstacle");
    const std::size_t per = (len + n_obs - 1) / n_obs;
    raw.values.resize(len, 3);
    for (std::size_t r = 0; r < len; ++r) {
      const auto& ob = sc.obstacles[r % n_obs];
      const auto& p = ob.positions[source_index(r / n_obs, ob.positions.size(), per)];
      raw.values.row(r) << p.x / 10.0, p.y / 10.0, ob.radius;
    }
  } else if (name == "Velocity" || name == "Yaw" || name == "Acceleration") {
    raw.values.resize(len, 1);
    for (std::size_t r = 0; r < len; ++r) {
      const auto& s = sc.ego_history[source_index(r, sc.ego_history.size(), len)];
      raw.values(r, 0) = name == "Velocity" ? s.v : (name == "Yaw" ? s.yaw : s.a);
    }
  } else if (name == "ReferencePoint") {
    raw.values.resize(len, 2);
    for (std::size_t r = 0; r < len; ++r) {
      const auto& p = sc.reference_points[source_index(r, sc.reference_points.size(), len)];
      raw.values.row(r) << p.x / 10.0, p.y / 10.0;
    }
  } else if (name == "Command") {
    raw.tokens.assign(len, sc.command);
  } else if (name == "Mapping" || name == "BEV") {
    require(ctx.aligned_tokens != nullptr, ErrorKind::shape, "extract_raw: grid experts need aligned tokens");
    const Mat& tok = *ctx.aligned_tokens;
    require(static_cast<std::size_t>(tok.rows()) == ctx.H * ctx.W, ErrorKind::shape,
            "extract_raw: aligned token count differs from H*W");
    const bool rows = name == "Mapping";
    const std::size_t n = rows ? ctx.H : ctx.W;
    require(len <= n, ErrorKind::config, "extract_raw: expert length exceeds BEV extent");
    raw.values = Mat::Zero(len, tok.cols());
    for (std::size_t r = 0; r < len; ++r) {
      const auto [lo, hi] = band(r, n, len);
      for (std::size_t a = lo; a < hi; ++a) {
        for (std::size_t o = 0; o < (rows ? ctx.W : ctx.H); ++o) {
          raw.values.row(r) += tok.row(rows ? a * ctx.W + o : o * ctx.W + a);
        }
      }
      raw.values.row(r) /= static_cast<double>((hi - lo) * (rows ? ctx.W : ctx.H));
    }
  } else {
    fail(ErrorKind::config, "extract_raw: unknown expert '" + name + "'");
  }
  return raw;
}

void extract_raw_backward(const ExpertSpec& spec, const ExpertContext& ctx, const Mat& draw, Mat& daligned) {
  if (spec.name != "Mapping" && spec.name != "BEV") return;
  const bool rows = spec.name == "Mapping";
  const std::size_t n = rows ? ctx.H : ctx.W;
  const std::size_t other = rows ? ctx.W : ctx.H;
  for (std::size_t r = 0; r < ctx.length; ++r) {
    const auto [lo, hi] = band(r, n, ctx.length);
    const double inv = 1.0 / static_cast<double>((hi - lo) * other);
    for (std::size_t a = lo; a < hi; ++a) {
      for (std::size_t o = 0; o < other; ++o) {
        daligned.row(rows ? a * ctx.W + o : o * ctx.W + a) += draw.row(r) * inv;
      }
    }
  }
}

Mat embed_modality(const RawModality& raw, const ExpertSpec& spec, const EmbeddingParams& params,
                   EmbeddingCache* cache) {
  require(raw.modality == spec.modality, ErrorKind::shape,
          "embed_modality: " + spec.name + " expects " + to_string(spec.modality) + " input, got " +
              to_string(raw.modality));
  require(raw.length() >= 1, ErrorKind::shape, "embed_modality: empty input sequence");
  Mat pre;
  if (spec.modality == Modality::text_command) {
    require(params.table.rows() == static_cast<Eigen::Index>(kCommandCount), ErrorKind::shape,
            "embed_modality: command table must have one row per command");
    pre.resize(raw.tokens.size(), params.table.cols());
    for (std::size_t t = 0; t < raw.tokens.size(); ++t) pre.row(t) = params.table.row(static_cast<int>(raw.tokens[t]));
  } else {
    require(raw.values.cols() == params.W.rows(), ErrorKind::shape,
            "embed_modality: raw width differs from affine layer input");
    pre = raw.values * params.W;
    pre.rowwise() += params.b;
  }

  Mat out(pre.rows(), pre.cols());
  Vec scale;
  switch (spec.modality) {
    case Modality::time_series: {
      scale.resize(pre.cols());
      for (Eigen::Index c = 0; c < pre.cols(); ++c) {
        const double mean = pre.col(c).mean();
        const double var = (pre.col(c).array() - mean).square().mean();
        scale[c] = 1.0 / std::sqrt(var + kNormEps);
        out.col(c) = (pre.col(c).array() - mean) * scale[c];
      }
      break;
    }
    case Modality::text_command: {
      scale.resize(pre.rows());
      for (Eigen::Index r = 0; r < pre.rows(); ++r) {
        scale[r] = 1.0 / std::sqrt(pre.row(r).squaredNorm() + 1e-12);
        out.row(r) = pre.row(r) * scale[r];
      }
      break;
    }
    default: {
      scale.resize(pre.rows());
      for (Eigen::Index r = 0; r < pre.rows(); ++r) {
        const double mean = pre.row(r).mean();
        const double var = (pre.row(r).array() - mean).square().mean();
        scale[r] = 1.0 / std::sqrt(var + kNormEps);
        out.row(r) = (pre.row(r).array() - mean) * scale[r];
      }
      break;
    }
  }
  if (cache) {
    cache->pre = std::move(pre);
    cache->out = out;
    cache->scale = std::move(scale);
  }
  return out;
}

EmbeddingGrads embed_modality_backward(const RawModality& raw, const ExpertSpec& spec,
                                       const EmbeddingParams& params, const EmbeddingCache& cache,
                                       const Mat& dout) {
  const Mat& y = cache.out;
  Mat dpre(y.rows(), y.cols());
  switch (spec.modality) {
    case Modality::time_series:
      for (Eigen::Index c = 0; c < y.cols(); ++c) {
        const double mdy = dout.col(c).mean();
        const double mdyy = dout.col(c).dot(y.col(c)) / static_cast<double>(y.rows());
        dpre.col(c) = cache.scale[c] * (dout.col(c).array() - mdy - y.col(c).array() * mdyy);
      }
      break;
    case Modality::text_command:
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        dpre.row(r) = cache.scale[r] * (dout.row(r) - y.row(r) * y.row(r).dot(dout.row(r)));
      }
      break;
    default:
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double mdy = dout.row(r).mean();
        const double mdyy = dout.row(r).dot(y.row(r)) / static_cast<double>(y.cols());
        dpre.row(r) = cache.scale[r] * (dout.row(r).array() - mdy - y.row(r).array() * mdyy);
      }
      break;
  }
  EmbeddingGrads g;
  if (spec.modality == Modality::text_command) {
    g.dtable = Mat::Zero(params.table.rows(), params.table.cols());
    for (std::size_t t = 0; t < raw.tokens.size(); ++t) g.dtable.row(static_cast<int>(raw.tokens[t])) += dpre.row(t);
  } else {
    g.dW.noalias() = raw.values.transpose() * dpre;
    g.db = dpre.colwise().sum();
    g.draw = dpre * params.W.transpose();
  }
  return g;
}

ExpertOutput expert_forward(const EgoQuery& ego, const Mat& embedding, const ExpertSpec& spec,
                            const AttentionProjections& params, std::size_t heads, FlopTrace* trace,
                            std::vector<AttentionCache>* caches, bool dense) {
  require(ego.dim() == static_cast<std::size_t>(embedding.cols()), ErrorKind::shape,
          "expert_forward: ego query and expert embedding widths differ");
  if (!dense) validate_pattern(spec.pattern, ego.length(), embedding.rows());
  ExpertOutput out;
  if (caches) caches->assign(ego.batch(), AttentionCache{});
  for (std::size_t b = 0; b < ego.batch(); ++b) {
    AttentionInputs in{ego.seq[b], embedding, embedding, heads};
    AttentionCache* cache = caches ? &(*caches)[b] : nullptr;
    out.seq.push_back(dense ? dense_reference(in, params, cache, trace)
                            : sparse_mhca(in, spec.pattern, params, trace, cache));
  }
  return out;
}

}  // namespace expertad
