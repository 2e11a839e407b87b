#include "mcvit/profiler.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

namespace mcvit {

std::int64_t memory_rows_per_segment(const ModelConfig& cfg) {
  const std::int64_t n = cfg.plan().tokens_per_segment;
  switch (cfg.variant) {
    case Variant::joint:
    case Variant::streaming: return 0;
    case Variant::memory_augmented: return n;
    case Variant::memory_consolidated:
      return cfg.consolidation.method == ConsolidationMethod::none ? n : cfg.consolidation.memories_per_segment;
  }
  return 0;
}

std::int64_t memory_rows_at(const ModelConfig& cfg, int tau) {
  const std::int64_t k = memory_rows_per_segment(cfg);
  const std::int64_t stored = static_cast<std::int64_t>(tau) * k;
  if (cfg.variant != Variant::memory_consolidated) return stored;
  const auto cap = cfg.policy.token_cap(k);
  return cap ? std::min(*cap, stored) : stored;
}

namespace {

void add_layer_costs(CostReport& r, std::int64_t n, std::int64_t m, std::int64_t d, std::int64_t heads,
                     std::int64_t mlp_dim, std::int64_t layers) {
  const std::int64_t scores = n * (n + m);
  r.attention_flops += layers * (4 * scores * d + 5 * heads * scores);
  r.projection_flops += layers * (2 * n * d * d + 4 * (n + m) * d * d + 2 * n * d * d);
  r.mlp_flops += layers * 4 * n * d * mlp_dim;
  r.peak_attention_elements = std::max(r.peak_attention_elements, heads * scores);
}

}  // namespace

CostReport cost_of_variant(const ModelConfig& cfg, std::int64_t total_tokens) {
  cfg.validate();
  const SegmentPlan plan = cfg.plan();
  if (total_tokens != plan.total_tokens())
    throw ShapeError("config describes " + std::to_string(plan.total_tokens()) + " tokens, not " +
                     std::to_string(total_tokens));
  const std::int64_t d = cfg.embed_dim(), heads = cfg.heads, mlp_dim = cfg.mlp_dim(), layers = cfg.layers;
  CostReport r;
  r.projection_flops = 2 * total_tokens * cfg.patch.patch_dim() * d;
  if (cfg.variant == Variant::joint) {
    add_layer_costs(r, total_tokens, 0, d, heads, mlp_dim, layers);
    r.peak_resident_tokens = total_tokens;
    if (layers == 0) r.peak_attention_elements = 0;
    return r;
  }
  const std::int64_t n = plan.tokens_per_segment;
  for (int tau = 0; tau < plan.segments; ++tau) {
    const std::int64_t m = memory_rows_at(cfg, tau);
    add_layer_costs(r, n, m, d, heads, mlp_dim, layers);
    r.peak_resident_tokens = std::max(r.peak_resident_tokens, n + layers * m);
  }
  if (layers == 0) r.peak_attention_elements = 0;
  return r;
}

CostReport cost_of_variant(const ModelConfig& cfg) { return cost_of_variant(cfg, cfg.plan().total_tokens()); }

EmpiricalReport measure_empirical(const ModelConfig& cfg, const ModelParams& params, const Tensor& video) {
  ad::NoGradGuard no_grad;
  ForwardStats stats;
  const auto start = std::chrono::steady_clock::now();
  encode_video(video, cfg, params, &stats);
  EmpiricalReport r;
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.peak_attention_elements = stats.peak_score_elements;
  r.peak_resident_tokens = stats.peak_resident_tokens;
  r.peak_resident_scalars = stats.peak_resident_tokens * cfg.embed_dim();
  r.key_counts = std::move(stats.key_counts);
  return r;
}

ModelConfig config_for_frames(const ModelConfig& base, int frames) {
  const int per_segment = base.video.frames / base.segments;
  if (per_segment < 1 || base.video.frames % base.segments != 0)
    throw ConfigError("template frames do not split evenly into its segments");
  if (frames < 1 || frames % per_segment != 0)
    throw ConfigError("frame count " + std::to_string(frames) + " is not a positive multiple of " +
                      std::to_string(per_segment) + " frames per segment");
  ModelConfig cfg = base;
  cfg.video.frames = frames;
  cfg.segments = frames / per_segment;
  return cfg;
}

std::vector<SweepRow> sweep(const ModelConfig& base, std::span<const int> frames, std::span<const Variant> variants) {
  if (frames.empty()) throw ConfigError("sweep needs at least one frame count");
  std::vector<SweepRow> rows;
  for (Variant v : variants) {
    for (int f : frames) {
      ModelConfig cfg = config_for_frames(base, f);
      cfg.variant = v;
      rows.push_back({v, f, cfg.segments, memory_rows_per_segment(cfg), cost_of_variant(cfg)});
    }
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << kSweepHeader << '\n';
  for (const auto& r : rows)
    out << to_string(r.variant) << ',' << r.frames << ',' << r.segments << ',' << r.memories << ','
        << r.cost.attention_flops << ',' << r.cost.projection_flops << ',' << r.cost.mlp_flops << ','
        << r.cost.peak_attention_elements << ',' << r.cost.peak_resident_tokens << '\n';
  return out.str();
}

void write_sweep(const std::filesystem::path& path, std::span<const SweepRow> rows) {
  write_file_atomic(path, sweep_csv(rows));
}

}  // namespace mcvit
