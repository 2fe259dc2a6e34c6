#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "expertad/perception_adapter.hpp"
#include "expertad/scenario.hpp"
#include "expertad/sparse_attention.hpp"

namespace expertad {

enum class ExpertCategory { Environmental, EgoState, Navigation };
enum class Modality { geometric, time_series, text_command, grid, waypoint };

std::string to_string(ExpertCategory c);
std::string to_string(Modality m);

struct ExpertSpec {
  std::string name;
  ExpertCategory category;
  AttentionPattern pattern;
  Modality modality;
  std::size_t raw_width;  // features per raw row; 0 for table lookups
};

struct PatternDefaults {
  std::size_t block_m = 4;
  std::size_t window_w = 2;
  std::size_t topk_k = 4;
};

/// Tracking, Mapping | Velocity, Yaw, Acceleration | ReferencePoint, BEV, Command.
/// Environmental -> block, EgoState -> window, Navigation -> topk.
std::vector<ExpertSpec> default_bank(std::size_t d, const PatternDefaults& patterns = {});

AttentionPattern::Kind pattern_family(ExpertCategory c);

/// Modality-specific raw slice of a scenario.
struct RawModality {
  Modality modality = Modality::geometric;
  Mat values;                   // L_e x raw_width (unused for text_command)
  std::vector<Command> tokens;  // text_command only
  std::size_t length() const {
    return modality == Modality::text_command ? tokens.size() : static_cast<std::size_t>(values.rows());
  }
};

/// Inputs the bank reads besides the scenario: the mapping-task aligned
/// grid, time-averaged, as (H*W) x d tokens, and the common sequence length.
struct ExpertContext {
  const Scenario* scenario = nullptr;
  const Mat* aligned_tokens = nullptr;
  std::size_t H = 0, W = 0;
  std::size_t length = 8;  // L_e
};

/// Every expert emits exactly ctx.length rows. Series are resampled by
/// index (row r reads source floor(r * n / L_e)); Mapping averages bands of
/// BEV rows across the lateral axis, BEV averages bands of columns.
RawModality extract_raw(const ExpertSpec& spec, const ExpertContext& ctx);
/// Routes d(raw) back onto the aligned tokens for grid-derived experts.
void extract_raw_backward(const ExpertSpec& spec, const ExpertContext& ctx, const Mat& draw, Mat& daligned);

struct EmbeddingParams {
  Mat W;       // raw_width x d
  RowVec b;    // 1 x d
  Mat table;   // 3 x d, text_command only
};

struct EmbeddingCache {
  Mat pre;     // affine output (or looked-up rows)
  Mat out;     // normalised
  Vec scale;   // 1/sigma per row (layer norm, unit norm) or per column (time series)
};

struct EmbeddingGrads {
  Mat dW;
  RowVec db;
  Mat dtable;
  Mat draw;
};

inline constexpr double kNormEps = 1e-5;

/// Affine layer to width d followed by the modality's normalisation:
/// time_series -> per-feature standardisation over the window,
/// text_command -> table lookup then unit-norm scaling,
/// geometric/grid/waypoint -> layer normalisation over d.
Mat embed_modality(const RawModality& raw, const ExpertSpec& spec, const EmbeddingParams& params,
                   EmbeddingCache* cache = nullptr);
EmbeddingGrads embed_modality_backward(const RawModality& raw, const ExpertSpec& spec,
                                       const EmbeddingParams& params, const EmbeddingCache& cache,
                                       const Mat& dout);

struct ExpertOutput {
  std::vector<Mat> seq;  // B entries, each L x d
};

/// F_bar = MHCA(F_ego, F_expert, F_expert) with the expert's pattern.
/// `dense` switches to dense_reference (baseline path).
ExpertOutput expert_forward(const EgoQuery& ego, const Mat& embedding, const ExpertSpec& spec,
                            const AttentionProjections& params, std::size_t heads, FlopTrace* trace = nullptr,
                            std::vector<AttentionCache>* caches = nullptr, bool dense = false);

}  // namespace expertad
