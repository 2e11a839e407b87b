#include "mcvit/runtime.hpp"

#include <algorithm>

namespace mcvit {

Variant parse_variant(const std::string& name) {
  if (name == "joint") return Variant::joint;
  if (name == "streaming") return Variant::streaming;
  if (name == "memory_augmented") return Variant::memory_augmented;
  if (name == "memory_consolidated") return Variant::memory_consolidated;
  throw ConfigError("unknown variant '" + name + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::joint: return "joint";
    case Variant::streaming: return "streaming";
    case Variant::memory_augmented: return "memory_augmented";
    case Variant::memory_consolidated: return "memory_consolidated";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (layers < 0) throw ConfigError("layers must be >= 0");
  if (heads < 1 || embed_dim() % heads != 0)
    throw ConfigError("embed_dim " + std::to_string(embed_dim()) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
  const SegmentPlan p = plan();
  policy.validate();
  if (variant == Variant::memory_consolidated) {
    if (consolidation.method == ConsolidationMethod::none)
      throw ConfigError("memory_consolidated needs a consolidation method other than none");
    consolidation.validate(p.tokens_per_segment);
  }
  if (lora.rank < 0) throw ConfigError("lora rank must be >= 0");
}

std::vector<NamedParam> ModelParams::parameters() const {
  std::vector<NamedParam> out;
  if (embed.projection.requires_grad()) out.push_back({"embed.projection", embed.projection});
  if (embed.positional.requires_grad()) out.push_back({"embed.positional", embed.positional});
  for (std::size_t l = 0; l < layers.size(); ++l)
    append_parameters(layers[l], "layer" + std::to_string(l) + ".", out);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += static_cast<std::size_t>(p.var.value().size());
  return n;
}

ModelParams init_model_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Rng root(seed);
  Rng embed_rng = root.split(1);
  ModelParams p;
  p.embed = init_embed_params(cfg.video, cfg.patch, embed_rng);
  for (int l = 0; l < cfg.layers; ++l) {
    Rng layer_rng = root.split(100 + static_cast<std::uint64_t>(l));
    p.layers.push_back(init_layer_params(cfg.embed_dim(), cfg.mlp_dim(), layer_rng));
  }
  if (cfg.lora.rank > 0) {
    for (int l = 0; l < cfg.layers; ++l) {
      Rng lora_rng = root.split(10000 + static_cast<std::uint64_t>(l));
      attach_lora(p.layers[l], cfg.lora.rank, cfg.lora.alpha, lora_rng);
    }
  }
  return p;
}

ad::Var pool(const ad::Var& tokens) {
  if (!tokens || tokens.rows() == 0) throw ShapeError("cannot pool an empty token sequence");
  return ad::mean_rows(tokens);
}

namespace {

void note_resident(ForwardStats* stats, std::int64_t tokens) {
  if (stats) stats->peak_resident_tokens = std::max(stats->peak_resident_tokens, tokens);
}

ad::Var run_stack(ad::Var z, const ModelParams& params, int heads, ForwardStats* stats) {
  for (const auto& layer : params.layers) z = transformer_layer(z, ad::Var(), layer, heads, stats);
  return z;
}

VideoEmbedding finish(std::vector<ad::Var> outs) {
  VideoEmbedding e;
  e.tokens = outs.size() == 1 ? outs.front() : ad::concat_rows(outs);
  e.pooled = pool(e.tokens);
  return e;
}

void check_layers(const ModelConfig& cfg, const ModelParams& params) {
  if (static_cast<int>(params.layers.size()) != cfg.layers)
    throw ShapeError("parameter set has " + std::to_string(params.layers.size()) + " layers, config says " +
                     std::to_string(cfg.layers));
}

// Shared segment loop for the memory-augmented and memory-consolidated
// variants. Memories from segment tau become visible from segment tau+1.
VideoEmbedding run_with_memory(const ad::Var& tokens, const ModelConfig& cfg, const ModelParams& params,
                               const ConsolidationConfig& consolidation, const MemoryPolicy& policy,
                               ForwardStats* stats) {
  check_layers(cfg, params);
  const SegmentPlan plan = cfg.plan();
  consolidation.validate(plan.tokens_per_segment);
  const auto segments = split_segments(tokens, plan);
  const Rng root(consolidation.seed);
  MemoryBank bank(cfg.layers, policy, root.split(0xba4cULL));

  std::vector<ad::Var> outs;
  std::vector<ad::Var> fresh(params.layers.size());
  for (int tau = 0; tau < plan.segments; ++tau) {
    note_resident(stats, plan.tokens_per_segment + bank.total_size());
    const bool last = tau + 1 == plan.segments;
    ad::Var z = segments[tau];
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      const LayerParams& layer = params.layers[l];
      z = transformer_layer(z, bank.memory(static_cast<int>(l)), layer, cfg.heads, stats);
      if (last) continue;
      Rng rng = root.split(static_cast<std::uint64_t>(tau)).split(l);
      ad::Var stored = ad::layer_norm(consolidate(z, consolidation, rng), layer.ln1_scale, layer.ln1_bias);
      fresh[l] = cfg.memory_grad_flow ? stored : ad::detach(stored);
    }
    outs.push_back(z);
    if (!last)
      for (std::size_t l = 0; l < fresh.size(); ++l) bank.append(static_cast<int>(l), fresh[l], tau);
  }
  return finish(std::move(outs));
}

}  // namespace

VideoEmbedding run_joint(const ad::Var& tokens, const ModelConfig& cfg, const ModelParams& params,
                         ForwardStats* stats) {
  check_layers(cfg, params);
  if (tokens.rows() > cfg.max_joint_tokens)
    throw ConfigError("joint attention over " + std::to_string(tokens.rows()) + " tokens exceeds max_joint_tokens=" +
                      std::to_string(cfg.max_joint_tokens));
  note_resident(stats, tokens.rows());
  return finish({run_stack(tokens, params, cfg.heads, stats)});
}

VideoEmbedding run_streaming(const ad::Var& tokens, const ModelConfig& cfg, const ModelParams& params,
                             ForwardStats* stats) {
  check_layers(cfg, params);
  const SegmentPlan plan = cfg.plan();
  std::vector<ad::Var> outs;
  for (const auto& segment : split_segments(tokens, plan)) {
    note_resident(stats, segment.rows());
    outs.push_back(run_stack(segment, params, cfg.heads, stats));
  }
  return finish(std::move(outs));
}

VideoEmbedding run_memory_augmented(const ad::Var& tokens, const ModelConfig& cfg, const ModelParams& params,
                                    ForwardStats* stats) {
  ConsolidationConfig keep_all;
  keep_all.method = ConsolidationMethod::none;
  return run_with_memory(tokens, cfg, params, keep_all, MemoryPolicy::unbounded(), stats);
}

VideoEmbedding run_mc_vit(const ad::Var& tokens, const ModelConfig& cfg, const ModelParams& params,
                          ForwardStats* stats) {
  if (cfg.consolidation.method == ConsolidationMethod::none)
    throw ConfigError("memory_consolidated needs a consolidation method other than none");
  return run_with_memory(tokens, cfg, params, cfg.consolidation, cfg.policy, stats);
}

VideoEmbedding run_variant(const ad::Var& tokens, const ModelConfig& cfg, const ModelParams& params,
                           ForwardStats* stats) {
  switch (cfg.variant) {
    case Variant::joint: return run_joint(tokens, cfg, params, stats);
    case Variant::streaming: return run_streaming(tokens, cfg, params, stats);
    case Variant::memory_augmented: return run_memory_augmented(tokens, cfg, params, stats);
    case Variant::memory_consolidated: return run_mc_vit(tokens, cfg, params, stats);
  }
  throw ConfigError("unhandled variant");
}

VideoEmbedding encode_video(const Tensor& video, const ModelConfig& cfg, const ModelParams& params,
                            ForwardStats* stats) {
  return run_variant(patch_embed(video, cfg.patch, params.embed), cfg, params, stats);
}

}  // namespace mcvit
