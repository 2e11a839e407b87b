#include "mcvit/tokenizer.hpp"

#include <cmath>
#include <string>

#include "mcvit/rng.hpp"

namespace mcvit {

void PatchConfig::validate() const {
  if (t < 1 || h < 1 || w < 1) throw ConfigError("patch extents must be >= 1");
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
}

void VideoShape::validate(const PatchConfig& p) const {
  p.validate();
  if (frames < 1 || height < 1 || width < 1) throw ConfigError("video extents must be >= 1");
  if (frames % p.t != 0 || height % p.h != 0 || width % p.w != 0)
    throw ConfigError("video " + std::to_string(frames) + "x" + std::to_string(height) + "x" +
                      std::to_string(width) + " is not divisible by patch " + std::to_string(p.t) + "x" +
                      std::to_string(p.h) + "x" + std::to_string(p.w));
}

int VideoShape::spatial_tokens(const PatchConfig& p) const { return (height / p.h) * (width / p.w); }

int VideoShape::token_count(const PatchConfig& p) const {
  validate(p);
  return (frames / p.t) * spatial_tokens(p);
}

SegmentPlan SegmentPlan::make(const VideoShape& video, const PatchConfig& patch, int segments) {
  video.validate(patch);
  if (segments < 1 || video.frames % segments != 0)
    throw ConfigError("frame count " + std::to_string(video.frames) + " is not divisible into " +
                      std::to_string(segments) + " segments");
  SegmentPlan plan;
  plan.segments = segments;
  plan.frames_per_segment = video.frames / segments;
  if (plan.frames_per_segment % patch.t != 0)
    throw ConfigError("frames per segment must be divisible by the temporal patch size");
  plan.tokens_per_segment = (plan.frames_per_segment / patch.t) * video.spatial_tokens(patch);
  return plan;
}

EmbedParams init_embed_params(const VideoShape& video, const PatchConfig& patch, Rng& rng) {
  const int tokens = video.token_count(patch);
  EmbedParams p;
  p.projection = ad::Var::leaf(rng.normal_matrix(patch.patch_dim(), patch.embed_dim,
                                                 1.0 / std::sqrt(static_cast<double>(patch.patch_dim()))));
  p.positional = ad::Var::leaf(rng.normal_matrix(tokens, patch.embed_dim, 0.5));
  return p;
}

Matrix extract_patches(const Tensor& video, const PatchConfig& patch) {
  if (video.rank() != 4) throw ShapeError("video must be rank 4 (frames, height, width, channels)");
  const VideoShape shape{static_cast<int>(video.dim(0)), static_cast<int>(video.dim(1)),
                         static_cast<int>(video.dim(2))};
  if (video.dim(3) != patch.channels)
    throw ShapeError("video has " + std::to_string(video.dim(3)) + " channels, config expects " +
                     std::to_string(patch.channels));
  shape.validate(patch);
  const int nt = shape.frames / patch.t, nh = shape.height / patch.h, nw = shape.width / patch.w;
  const int C = patch.channels;
  Matrix out(static_cast<Index>(nt) * nh * nw, patch.patch_dim());
  auto at = [&](int f, int y, int x, int c) {
    return video[((static_cast<std::size_t>(f) * shape.height + y) * shape.width + x) * C + c];
  };
  Index row = 0;
  for (int ti = 0; ti < nt; ++ti)
    for (int hi = 0; hi < nh; ++hi)
      for (int wi = 0; wi < nw; ++wi, ++row) {
        Index col = 0;
        for (int dt = 0; dt < patch.t; ++dt)
          for (int dy = 0; dy < patch.h; ++dy)
            for (int dx = 0; dx < patch.w; ++dx)
              for (int c = 0; c < C; ++c)
                out(row, col++) = at(ti * patch.t + dt, hi * patch.h + dy, wi * patch.w + dx, c);
      }
  return out;
}

ad::Var patch_embed(const Tensor& video, const PatchConfig& patch, const EmbedParams& params) {
  const Matrix patches = extract_patches(video, patch);
  if (params.projection.rows() != patch.patch_dim() || params.projection.cols() != patch.embed_dim)
    throw ShapeError("patch projection has the wrong shape");
  if (params.positional.rows() != patches.rows())
    throw ShapeError("positional table has " + std::to_string(params.positional.rows()) +
                     " rows but the video yields " + std::to_string(patches.rows()) + " tokens");
  return ad::matmul(ad::Var::constant(patches), params.projection) + params.positional;
}

Matrix interpolate_pos_emb(const Matrix& positional, int spatial_tokens, int new_temporal) {
  if (spatial_tokens < 1 || positional.rows() % spatial_tokens != 0)
    throw ShapeError("positional rows are not a multiple of the spatial token count");
  const Index old_temporal = positional.rows() / spatial_tokens;
  Matrix out(static_cast<Index>(new_temporal) * spatial_tokens, positional.cols());
  for (int s = 0; s < spatial_tokens; ++s) {
    Matrix track(old_temporal, positional.cols());
    for (Index t = 0; t < old_temporal; ++t) track.row(t) = positional.row(t * spatial_tokens + s);
    const Matrix resampled = interpolate_rows(track, new_temporal);
    for (int t = 0; t < new_temporal; ++t) out.row(static_cast<Index>(t) * spatial_tokens + s) = resampled.row(t);
  }
  return out;
}

std::vector<ad::Var> split_segments(const ad::Var& tokens, const SegmentPlan& plan) {
  if (tokens.rows() != plan.total_tokens())
    throw ShapeError("token count " + std::to_string(tokens.rows()) + " does not split into " +
                     std::to_string(plan.segments) + " x " + std::to_string(plan.tokens_per_segment));
  std::vector<ad::Var> out;
  out.reserve(plan.segments);
  for (int s = 0; s < plan.segments; ++s)
    out.push_back(plan.segments == 1 ? tokens
                                     : ad::slice_rows(tokens, static_cast<Index>(s) * plan.tokens_per_segment,
                                                      plan.tokens_per_segment));
  return out;
}

}  // namespace mcvit
