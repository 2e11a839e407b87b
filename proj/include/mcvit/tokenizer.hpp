#pragma once

#include <vector>

#include "mcvit/autodiff.hpp"

namespace mcvit {

struct PatchConfig {
  int t = 1;
  int h = 1;
  int w = 1;
  int channels = 1;
  int embed_dim = 8;

  int patch_dim() const { return t * h * w * channels; }
  void validate() const;
};

/// Video extent in frames x height x width (channels live in PatchConfig).
struct VideoShape {
  int frames = 1;
  int height = 1;
  int width = 1;

  int token_count(const PatchConfig& p) const;
  int spatial_tokens(const PatchConfig& p) const;
  void validate(const PatchConfig& p) const;
};

struct SegmentPlan {
  int segments = 1;
  int frames_per_segment = 1;
  int tokens_per_segment = 1;

  static SegmentPlan make(const VideoShape& video, const PatchConfig& patch, int segments);
  int total_tokens() const { return segments * tokens_per_segment; }
};

struct EmbedParams {
  ad::Var projection;  // patch_dim x d
  ad::Var positional;  // N_T x d
};

EmbedParams init_embed_params(const VideoShape& video, const PatchConfig& patch, class Rng& rng);

/// Flattens a rank-4 (T, H, W, C) video into one row per patch. Patches are
/// enumerated time-major then raster order; each row is (dt, dh, dw, c)
/// row-major.
Matrix extract_patches(const Tensor& video, const PatchConfig& patch);

/// token_i = flatten(patch_i) * E + P_i.
ad::Var patch_embed(const Tensor& video, const PatchConfig& patch, const EmbedParams& params);

/// Linear resampling of the rows of `table` to `new_rows` rows with aligned
/// endpoints: output row j samples position j * (old - 1) / (new - 1).
template <typename Derived>
MatrixX<typename Derived::Scalar> interpolate_rows(const Eigen::MatrixBase<Derived>& table, Index new_rows) {
  using Scalar = typename Derived::Scalar;
  if (new_rows < 2) throw ConfigError("interpolation needs at least 2 output rows");
  const Index old_rows = table.rows();
  MatrixX<Scalar> out(new_rows, table.cols());
  if (old_rows == 1) {
    out = table.row(0).replicate(new_rows, 1);
    return out;
  }
  for (Index j = 0; j < new_rows; ++j) {
    const Scalar pos = static_cast<Scalar>(j) * static_cast<Scalar>(old_rows - 1) / static_cast<Scalar>(new_rows - 1);
    Index lo = static_cast<Index>(std::floor(pos));
    if (lo >= old_rows - 1) lo = old_rows - 2;
    const Scalar frac = pos - static_cast<Scalar>(lo);
    out.row(j) = (Scalar(1) - frac) * table.row(lo) + frac * table.row(lo + 1);
  }
  return out;
}

/// Stretches full-video positional embeddings laid out as
/// (temporal x spatial) rows to `new_temporal` temporal positions,
/// interpolating each spatial position independently along time.
Matrix interpolate_pos_emb(const Matrix& positional, int spatial_tokens, int new_temporal);

/// Splits rows into `plan.segments` contiguous blocks of equal size.
std::vector<ad::Var> split_segments(const ad::Var& tokens, const SegmentPlan& plan);

}  // namespace mcvit
