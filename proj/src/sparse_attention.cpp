#include "expertad/sparse_attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "expertad/error.hpp"

namespace expertad {
namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

/// Contiguous key range [lo, hi) of the block containing query i.
std::pair<std::size_t, std::size_t> block_range(std::size_t i, std::size_t m, std::size_t L_q,
                                                std::size_t L_kv) {
  const std::uint64_t b = i / m;
  const std::uint64_t lo = ceil_div(b * m * L_kv, L_q);
  const std::uint64_t hi = ceil_div((b + 1) * m * L_kv, L_q);
  return {std::min<std::uint64_t>(lo, L_kv), std::min<std::uint64_t>(hi, L_kv)};
}

std::pair<std::size_t, std::size_t> window_range(std::size_t i, std::size_t w, std::size_t L_kv) {
  const std::size_t lo = i > w ? i - w : 0;
  const std::size_t hi = std::min(L_kv, i + w + 1);
  return {std::min(lo, L_kv), std::max(std::min(lo, L_kv), hi)};
}

std::size_t support_size(const AttentionPattern& p, std::size_t i, std::size_t L_q, std::size_t L_kv) {
  switch (p.kind) {
    case AttentionPattern::Kind::dense: return L_kv;
    case AttentionPattern::Kind::block: {
      auto [lo, hi] = block_range(i, p.param, L_q, L_kv);
      return hi - lo;
    }
    case AttentionPattern::Kind::window: {
      auto [lo, hi] = window_range(i, p.param, L_kv);
      return hi - lo;
    }
    case AttentionPattern::Kind::topk: return std::min(p.param, L_kv);
  }
  return 0;
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t t = 0; t < n; ++t) acc += a[t] * b[t];
  return acc;
}

void check_inputs(const AttentionInputs& in, const AttentionProjections& proj) {
  const auto d = in.Q.cols();
  require(in.heads >= 1 && d % static_cast<Eigen::Index>(in.heads) == 0, ErrorKind::shape,
          "attention: model dim must be divisible by head count");
  require(in.K.cols() == d && in.V.cols() == d && in.K.rows() == in.V.rows(), ErrorKind::shape,
          "attention: Q/K/V widths or K/V lengths disagree");
  require(in.Q.rows() >= 1 && in.K.rows() >= 1, ErrorKind::shape, "attention: empty sequence");
  require(proj.Wq.rows() == d && proj.Wq.cols() == d && proj.Wk.rows() == d && proj.Wv.rows() == d &&
              proj.Wo.rows() == d && proj.bo.size() == d,
          ErrorKind::shape, "attention: projection shapes disagree with model dim");
}

}  // namespace

AttentionPattern parse_pattern(const std::string& text) {
  if (text == "dense") return AttentionPattern::dense();
  const auto colon = text.find(':');
  require(colon != std::string::npos, ErrorKind::config, "pattern: expected dense|block:<m>|window:<w>|topk:<k>, got '" + text + "'");
  const std::string kind = text.substr(0, colon);
  const std::string num = text.substr(colon + 1);
  require(!num.empty() && std::all_of(num.begin(), num.end(), [](char c) { return c >= '0' && c <= '9'; }),
          ErrorKind::config, "pattern: bad parameter in '" + text + "'");
  const std::size_t value = std::stoul(num);
  if (kind == "block") {
    require(value >= 1, ErrorKind::config, "pattern: block size must be >= 1");
    return AttentionPattern::block(value);
  }
  if (kind == "window") return AttentionPattern::window(value);
  if (kind == "topk") {
    require(value >= 1, ErrorKind::config, "pattern: topk k must be >= 1");
    return AttentionPattern::topk(value);
  }
  fail(ErrorKind::config, "pattern: unknown kind '" + kind + "'");
}

std::string to_string(const AttentionPattern& p) {
  switch (p.kind) {
    case AttentionPattern::Kind::dense: return "dense";
    case AttentionPattern::Kind::block: return "block:" + std::to_string(p.param);
    case AttentionPattern::Kind::window: return "window:" + std::to_string(p.param);
    case AttentionPattern::Kind::topk: return "topk:" + std::to_string(p.param);
  }
  return "?";
}

void validate_pattern(const AttentionPattern& p, std::size_t L_q, std::size_t L_kv) {
  require(L_q >= 1 && L_kv >= 1, ErrorKind::shape, "pattern: empty sequence");
  if (p.kind == AttentionPattern::Kind::block) {
    require(p.param >= 1, ErrorKind::config, "pattern: block size must be >= 1");
  }
  if (p.kind == AttentionPattern::Kind::topk) {
    require(p.param >= 1 && p.param <= L_kv, ErrorKind::config,
            "pattern: topk k=" + std::to_string(p.param) + " outside [1, " + std::to_string(L_kv) + "]");
  }
  for (std::size_t i = 0; i < L_q; ++i) {
    require(support_size(p, i, L_q, L_kv) > 0, ErrorKind::config,
            "pattern " + to_string(p) + ": empty support for query " + std::to_string(i) + " with " +
                std::to_string(L_kv) + " keys");
  }
}

std::vector<std::size_t> pattern_support(std::size_t i, std::size_t L_q, std::size_t L_kv,
                                         const AttentionPattern& pattern,
                                         std::optional<std::span<const double>> scores_row) {
  std::vector<std::size_t> out;
  switch (pattern.kind) {
    case AttentionPattern::Kind::dense:
      out.resize(L_kv);
      std::iota(out.begin(), out.end(), std::size_t{0});
      break;
    case AttentionPattern::Kind::block: {
      require(pattern.param >= 1, ErrorKind::config, "pattern: block size must be >= 1");
      auto [lo, hi] = block_range(i, pattern.param, L_q, L_kv);
      for (std::size_t j = lo; j < hi; ++j) out.push_back(j);
      break;
    }
    case AttentionPattern::Kind::window: {
      auto [lo, hi] = window_range(i, pattern.param, L_kv);
      for (std::size_t j = lo; j < hi; ++j) out.push_back(j);
      break;
    }
    case AttentionPattern::Kind::topk: {
      require(scores_row.has_value() && scores_row->size() == L_kv, ErrorKind::shape,
              "pattern_support: topk needs a score row of length L_kv");
      require(pattern.param >= 1 && pattern.param <= L_kv, ErrorKind::config, "pattern: topk k outside [1, L_kv]");
      const auto& row = *scores_row;
      std::vector<std::size_t> order(L_kv);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
      out.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pattern.param));
      std::sort(out.begin(), out.end());
      break;
    }
  }
  return out;
}

Mat sparse_mhca(const AttentionInputs& in, const AttentionPattern& pattern, const AttentionProjections& proj,
                FlopTrace* trace, AttentionCache* cache) {
  check_inputs(in, proj);
  const std::size_t L_q = in.Q.rows(), L_kv = in.K.rows(), d = in.Q.cols(), H = in.heads, dk = d / H;
  validate_pattern(pattern, L_q, L_kv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Mat q = in.Q * proj.Wq;
  Mat k = in.K * proj.Wk;
  Mat v = in.V * proj.Wv;
  if (trace) {
    trace->matmul("proj", L_q, d, d);
    trace->matmul("proj", L_kv, d, d);
    trace->matmul("proj", L_kv, d, d);
  }

  Mat ctx = Mat::Zero(L_q, d);
  if (cache) {
    cache->heads = H;
    cache->supports.assign(H, std::vector<std::vector<std::size_t>>(L_q));
    cache->weights.assign(H, std::vector<std::vector<double>>(L_q));
  }
  std::vector<double> row_scores(L_kv);
  std::vector<double> w;
  std::vector<std::size_t> support;
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t off = h * dk;
    for (std::size_t i = 0; i < L_q; ++i) {
      const double* qi = q.row(i).data() + off;
      if (pattern.kind == AttentionPattern::Kind::topk) {
        for (std::size_t j = 0; j < L_kv; ++j) row_scores[j] = dot(qi, k.row(j).data() + off, dk) * scale;
        if (trace) trace->matmul("topk_scan", 1, dk, L_kv);
        support = pattern_support(i, L_q, L_kv, pattern, std::span<const double>(row_scores));
      } else {
        support = pattern_support(i, L_q, L_kv, pattern);
      }
      require(!support.empty(), ErrorKind::numerical, "sparse_mhca: empty support set");
      const std::size_t n = support.size();
      w.resize(n);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < n; ++t) {
        w[t] = dot(qi, k.row(support[t]).data() + off, dk) * scale;
        mx = std::max(mx, w[t]);
      }
      double sum = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        w[t] = std::exp(w[t] - mx);
        sum += w[t];
      }
      for (std::size_t t = 0; t < n; ++t) w[t] /= sum;
      double* out = ctx.row(i).data() + off;
      for (std::size_t t = 0; t < n; ++t) {
        const double* vj = v.row(support[t]).data() + off;
        for (std::size_t c = 0; c < dk; ++c) out[c] += w[t] * vj[c];
      }
      if (trace) {
        trace->matmul("score", 1, dk, n);
        trace->softmax("softmax", n);
        trace->matmul("value", 1, n, dk);
      }
      if (cache) {
        cache->supports[h][i] = support;
        cache->weights[h][i] = w;
      }
    }
  }

  Mat out = ctx * proj.Wo;
  out.rowwise() += proj.bo;
  if (trace) trace->matmul("proj", L_q, d, d);
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->ctx = std::move(ctx);
  }
  return out;
}

AttentionGrads sparse_mhca_backward(const AttentionInputs& in, const AttentionProjections& proj,
                                    const AttentionCache& cache, const Mat& dout) {
  const std::size_t L_q = in.Q.rows(), d = in.Q.cols(), H = cache.heads, dk = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  AttentionGrads g;
  g.dWo.noalias() = cache.ctx.transpose() * dout;
  g.dbo = dout.colwise().sum();
  const Mat dctx = dout * proj.Wo.transpose();

  Mat dq = Mat::Zero(cache.q.rows(), d);
  Mat dk_ = Mat::Zero(cache.k.rows(), d);
  Mat dv = Mat::Zero(cache.v.rows(), d);
  std::vector<double> ds;
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t off = h * dk;
    for (std::size_t i = 0; i < L_q; ++i) {
      const auto& sup = cache.supports[h][i];
      const auto& a = cache.weights[h][i];
      const double* dci = dctx.row(i).data() + off;
      const std::size_t n = sup.size();
      ds.assign(n, 0.0);
      double inner = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const std::size_t j = sup[t];
        ds[t] = dot(dci, cache.v.row(j).data() + off, dk);  // da_j
        inner += a[t] * ds[t];
        double* dvj = dv.row(j).data() + off;
        for (std::size_t c = 0; c < dk; ++c) dvj[c] += a[t] * dci[c];
      }
      const double* qi = cache.q.row(i).data() + off;
      double* dqi = dq.row(i).data() + off;
      for (std::size_t t = 0; t < n; ++t) {
        const std::size_t j = sup[t];
        const double dsj = a[t] * (ds[t] - inner) * scale;
        const double* kj = cache.k.row(j).data() + off;
        double* dkj = dk_.row(j).data() + off;
        for (std::size_t c = 0; c < dk; ++c) {
          dqi[c] += dsj * kj[c];
          dkj[c] += dsj * qi[c];
        }
      }
    }
  }
  g.dWq.noalias() = in.Q.transpose() * dq;
  g.dWk.noalias() = in.K.transpose() * dk_;
  g.dWv.noalias() = in.V.transpose() * dv;
  g.dQ = dq * proj.Wq.transpose();
  g.dK = dk_ * proj.Wk.transpose();
  g.dV = dv * proj.Wv.transpose();
  return g;
}

Mat dense_reference(const AttentionInputs& in, const AttentionProjections& proj, AttentionCache* cache,
                    FlopTrace* trace) {
  check_inputs(in, proj);
  const std::size_t L_q = in.Q.rows(), L_kv = in.K.rows(), d = in.Q.cols(), H = in.heads, dk = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Mat q = in.Q * proj.Wq;
  Mat k = in.K * proj.Wk;
  Mat v = in.V * proj.Wv;
  if (trace) {
    trace->matmul("proj", L_q, d, d);
    trace->matmul("proj", L_kv, d, d);
    trace->matmul("proj", L_kv, d, d);
  }
  Mat ctx = Mat::Zero(L_q, d);
  if (cache) {
    cache->heads = H;
    cache->supports.assign(H, std::vector<std::vector<std::size_t>>(L_q));
    cache->weights.assign(H, std::vector<std::vector<double>>(L_q));
  }
  std::vector<double> p(L_kv);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t i = 0; i < L_q; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < L_kv; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < dk; ++c) acc += q(i, h * dk + c) * k(j, h * dk + c);
        p[j] = acc * scale;
        mx = std::max(mx, p[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < L_kv; ++j) {
        p[j] = std::exp(p[j] - mx);
        sum += p[j];
      }
      for (std::size_t j = 0; j < L_kv; ++j) p[j] /= sum;
      for (std::size_t j = 0; j < L_kv; ++j) {
        for (std::size_t c = 0; c < dk; ++c) ctx(i, h * dk + c) += p[j] * v(j, h * dk + c);
      }
      if (trace) {
        trace->matmul("score", 1, dk, L_kv);
        trace->softmax("softmax", L_kv);
        trace->matmul("value", 1, L_kv, dk);
      }
      if (cache) {
        cache->supports[h][i].resize(L_kv);
        std::iota(cache->supports[h][i].begin(), cache->supports[h][i].end(), std::size_t{0});
        cache->weights[h][i] = p;
      }
    }
  }
  Mat out = ctx * proj.Wo;
  out.rowwise() += proj.bo;
  if (trace) trace->matmul("proj", L_q, d, d);
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->ctx = std::move(ctx);
  }
  return out;
}

Mat masked_dense_attention(const AttentionInputs& in, const AttentionProjections& proj,
                           const std::vector<std::vector<bool>>& mask) {
  check_inputs(in, proj);
  const std::size_t L_q = in.Q.rows(), L_kv = in.K.rows(), d = in.Q.cols(), H = in.heads, dk = d / H;
  require(mask.size() == L_q, ErrorKind::shape, "masked attention: mask rows differ from L_q");
  const Mat q = in.Q * proj.Wq, k = in.K * proj.Wk, v = in.V * proj.Wv;
  Mat ctx = Mat::Zero(L_q, d);
  for (std::size_t h = 0; h < H; ++h) {
    const auto cols = Eigen::seqN(h * dk, dk);
    Mat scores = (q(Eigen::all, cols) * k(Eigen::all, cols).transpose()) / std::sqrt(static_cast<double>(dk));
    for (std::size_t i = 0; i < L_q; ++i) {
      for (std::size_t j = 0; j < L_kv; ++j) {
        if (!mask[i][j]) scores(i, j) = -std::numeric_limits<double>::infinity();
      }
      const double mx = scores.row(i).maxCoeff();
      scores.row(i) = (scores.row(i).array() - mx).exp().matrix();
      scores.row(i) /= scores.row(i).sum();
    }
    ctx(Eigen::all, cols) = scores * v(Eigen::all, cols);
  }
  Mat out = ctx * proj.Wo;
  out.rowwise() += proj.bo;
  return out;
}

std::uint64_t analytic_support_total(const AttentionPattern& pattern, std::size_t L_q, std::size_t L_kv) {
  switch (pattern.kind) {
    case AttentionPattern::Kind::dense:
      return static_cast<std::uint64_t>(L_q) * L_kv;
    case AttentionPattern::Kind::topk:
      return static_cast<std::uint64_t>(L_q) * std::min(pattern.param, L_kv);
    case AttentionPattern::Kind::block:
      if (L_q == L_kv) {
        // Full blocks of m plus a trailing partial block of r queries/keys.
        const std::uint64_t m = pattern.param, full = L_q / m, r = L_q % m;
        return full * m * m + r * r;
      }
      break;
    case AttentionPattern::Kind::window:
      if (L_q <= L_kv) {
        // Sum of clamped window widths, min(i+w, L_kv-1) - max(i-w, 0) + 1.
        std::uint64_t total = 0;
        const std::uint64_t w = pattern.param;
        for (std::uint64_t i = 0; i < L_q; ++i) {
          const std::uint64_t lo = i > w ? i - w : 0;
          const std::uint64_t hi = std::min<std::uint64_t>(i + w, L_kv - 1);
          total += hi - lo + 1;
        }
        return total;
      }
      break;
  }
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < L_q; ++i) total += support_size(pattern, i, L_q, L_kv);
  return total;
}

std::map<std::string, FlopCount> analytic_attention_flops(const AttentionPattern& pattern, std::size_t L_q,
                                                          std::size_t L_kv, std::size_t dim,
                                                          std::size_t heads) {
  require(heads >= 1 && dim % heads == 0, ErrorKind::config, "analytic flops: dim must be divisible by heads");
  const std::uint64_t dk = dim / heads;
  const std::uint64_t support = analytic_support_total(pattern, L_q, L_kv);
  std::map<std::string, FlopCount> out;
  out["proj"].multiply_adds = (2ULL * L_q + 2ULL * L_kv) * dim * dim;
  out["score"].multiply_adds = heads * support * dk;
  out["softmax"].exponentials = heads * support;
  out["value"].multiply_adds = heads * support * dk;
  if (pattern.kind == AttentionPattern::Kind::topk) {
    out["topk_scan"].multiply_adds = heads * static_cast<std::uint64_t>(L_q) * L_kv * dk;
  }
  return out;
}

}  // namespace expertad
