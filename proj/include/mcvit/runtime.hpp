#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcvit/blocks.hpp"
#include "mcvit/consolidation.hpp"
#include "mcvit/memory_bank.hpp"
#include "mcvit/tokenizer.hpp"

namespace mcvit {

enum class Variant { joint, streaming, memory_augmented, memory_consolidated };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

struct LoraConfig {
  int rank = 0;  // 0 disables adapters
  double alpha = 1.0;
};

struct ModelConfig {
  Variant variant = Variant::memory_consolidated;
  int layers = 2;
  int heads = 4;
  int mlp_ratio = 4;
  PatchConfig patch;
  VideoShape video;
  int segments = 1;
  ConsolidationConfig consolidation;
  MemoryPolicy policy;
  // Let gradients reach past segments through stored memories. Off by
  // default: memories are detached when stored.
  bool memory_grad_flow = false;
  // Joint attention refuses inputs longer than this.
  std::int64_t max_joint_tokens = 16384;
  LoraConfig lora;

  int embed_dim() const { return patch.embed_dim; }
  int mlp_dim() const { return mlp_ratio * patch.embed_dim; }
  SegmentPlan plan() const { return SegmentPlan::make(video, patch, segments); }
  void validate() const;
};

struct ModelParams {
  EmbedParams embed;
  std::vector<LayerParams> layers;

  std::vector<NamedParam> parameters() const;
  std::size_t parameter_count() const;
};

/// Initial weights depend only on the shapes and the seed, never on the
/// variant, so variants can be compared on identical weights.
ModelParams init_model_params(const ModelConfig& cfg, std::uint64_t seed);

struct VideoEmbedding {
  ad::Var tokens;  // N_T x d, segments concatenated in order
  ad::Var pooled;  // 1 x d
};

/// Mean of the token rows.
ad::Var pool(const ad::Var& tokens);

VideoEmbedding run_joint(const ad::Var& tokens, const ModelConfig& cfg, const ModelParams& params,
                         ForwardStats* stats = nullptr);
VideoEmbedding run_streaming(const ad::Var& tokens, const ModelConfig& cfg, const ModelParams& params,
                             ForwardStats* stats = nullptr);
VideoEmbedding run_memory_augmented(const ad::Var& tokens, const ModelConfig& cfg, const ModelParams& params,
                                    ForwardStats* stats = nullptr);
VideoEmbedding run_mc_vit(const ad::Var& tokens, const ModelConfig& cfg, const ModelParams& params,
                          ForwardStats* stats = nullptr);

/// Dispatches on cfg.variant.
VideoEmbedding run_variant(const ad::Var& tokens, const ModelConfig& cfg, const ModelParams& params,
                           ForwardStats* stats = nullptr);

/// patch_embed followed by run_variant.
VideoEmbedding encode_video(const Tensor& video, const ModelConfig& cfg, const ModelParams& params,
                            ForwardStats* stats = nullptr);

}  // namespace mcvit
