#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mcvit/runtime.hpp"

namespace mcvit {

/// Closed-form cost of one forward pass. One multiply-accumulate counts as
/// 2 FLOPs and softmax as 5 FLOPs per score. Layer norms, GELU, pooling and
/// consolidation are not counted; LoRA adapters are not counted either.
struct CostReport {
  std::int64_t attention_flops = 0;   // QK^T, softmax, and scores x V
  std::int64_t projection_flops = 0;  // patch embedding, Q/K/V and output projections
  std::int64_t mlp_flops = 0;
  std::int64_t peak_attention_elements = 0;  // largest set of score matrices alive in one attention call
  std::int64_t peak_resident_tokens = 0;     // current tokens plus every stored memory row

  bool operator==(const CostReport&) const = default;
};

/// Memory rows each layer sees while processing segment `tau` (0-based).
std::int64_t memory_rows_at(const ModelConfig& cfg, int tau);

/// Rows added to the memory per segment: 0 for joint and streaming, N for
/// memory-augmented, K for memory-consolidated (N when the method is none).
std::int64_t memory_rows_per_segment(const ModelConfig& cfg);

/// `total_tokens` must equal cfg's token count; it is taken as a check.
CostReport cost_of_variant(const ModelConfig& cfg, std::int64_t total_tokens);
CostReport cost_of_variant(const ModelConfig& cfg);

struct EmpiricalReport {
  std::int64_t peak_attention_elements = 0;
  std::int64_t peak_resident_tokens = 0;
  std::int64_t peak_resident_scalars = 0;  // peak_resident_tokens x embed dim
  double wall_seconds = 0.0;
  std::vector<Index> key_counts;
};

/// Instrumented gradient-free forward pass of `video`.
EmpiricalReport measure_empirical(const ModelConfig& cfg, const ModelParams& params, const Tensor& video);

struct SweepRow {
  Variant variant;
  int frames = 0;
  int segments = 0;
  std::int64_t memories = 0;  // memory_rows_per_segment
  CostReport cost;
};

/// Reuses the template's frames-per-segment so the segment count grows with
/// the frame count. Every frame count must be a positive multiple of it.
ModelConfig config_for_frames(const ModelConfig& base, int frames);

std::vector<SweepRow> sweep(const ModelConfig& base, std::span<const int> frames, std::span<const Variant> variants);

inline constexpr const char* kSweepHeader =
    "variant,frames,segments,K,attention_flops,projection_flops,mlp_flops,peak_attention_elements,"
    "peak_resident_tokens";

std::string sweep_csv(std::span<const SweepRow> rows);

/// Writes sweep_csv atomically; unwritable paths raise IoError.
void write_sweep(const std::filesystem::path& path, std::span<const SweepRow> rows);

}  // namespace mcvit
