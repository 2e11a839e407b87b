#pragma once

// Straight-line re-code of the block and of the memory-augmented segment
// loop on top of the naive oracles.

#include "mcvit/blocks.hpp"
#include "mcvit/runtime.hpp"
#include "oracles.hpp"

namespace reference {

inline oracle::Grid grid(const mcvit::ad::Var& v) { return oracle::from(v.value()); }
inline std::vector<double> row(const mcvit::ad::Var& v) { return oracle::from(v.value())[0]; }

inline oracle::Grid layer(const oracle::Grid& z, const oracle::Grid& memory, const mcvit::LayerParams& p, int heads) {
  const auto zn = oracle::layer_norm(z, row(p.ln1_scale), row(p.ln1_bias));
  auto kv = zn;
  kv.insert(kv.end(), memory.begin(), memory.end());
  const auto attn = oracle::attention(zn, kv, grid(p.query.weight), grid(p.key.weight), grid(p.value.weight),
                                      grid(p.output.weight), heads);
  const auto y = oracle::add(attn, z);
  const auto yn = oracle::layer_norm(y, row(p.ln2_scale), row(p.ln2_bias));
  auto hidden = oracle::matmul(yn, grid(p.mlp_in.weight));
  const auto b1 = row(p.mlp_in_bias);
  for (auto& r : hidden)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = oracle::gelu(r[j] + b1[j]);
  auto out = oracle::matmul(hidden, grid(p.mlp_out.weight));
  const auto b2 = row(p.mlp_out_bias);
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < out[i].size(); ++j) out[i][j] += b2[j] + y[i][j];
  return out;
}

/// Memory-augmented loop: every layer's output of every earlier segment,
/// normalized with that layer's first LN, is appended to that layer's memory.
/// With `segments == 1` this is the plain joint stack.
inline oracle::Grid memory_augmented(const oracle::Grid& tokens, const mcvit::ModelParams& params, int segments,
                                     int heads) {
  const std::size_t n = tokens.size() / segments;
  std::vector<oracle::Grid> memory(params.layers.size());
  oracle::Grid out;
  for (int s = 0; s < segments; ++s) {
    oracle::Grid z(tokens.begin() + s * n, tokens.begin() + (s + 1) * n);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      const auto& p = params.layers[l];
      z = layer(z, memory[l], p, heads);
      const auto stored = oracle::layer_norm(z, row(p.ln1_scale), row(p.ln1_bias));
      memory[l].insert(memory[l].end(), stored.begin(), stored.end());
    }
    out.insert(out.end(), z.begin(), z.end());
  }
  return out;
}

inline oracle::Grid streaming(const oracle::Grid& tokens, const mcvit::ModelParams& params, int segments, int heads) {
  const std::size_t n = tokens.size() / segments;
  oracle::Grid out;
  for (int s = 0; s < segments; ++s) {
    oracle::Grid z(tokens.begin() + s * n, tokens.begin() + (s + 1) * n);
    for (const auto& p : params.layers) z = layer(z, {}, p, heads);
    out.insert(out.end(), z.begin(), z.end());
  }
  return out;
}

}  // namespace reference
