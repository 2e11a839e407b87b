#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mcvit/autodiff.hpp"
#include "mcvit/gradcheck.hpp"

namespace mcvit {

class Rng;

/// Low-rank update acting on row vectors: x * down * up / alpha.
/// `down` (d_in x r) is A^T and `up` (r x d_out) is B^T of the column form
/// h = W x + B A x / alpha; `up` starts at zero.
struct LoraAdapter {
  ad::Var down;
  ad::Var up;
  double alpha = 1.0;

  Index rank() const { return down.cols(); }
};

struct Linear {
  ad::Var weight;  // d_in x d_out
  std::optional<LoraAdapter> lora;
};

ad::Var lora_linear(const ad::Var& x, const Linear& layer);

struct LayerParams {
  ad::Var ln1_scale, ln1_bias;
  ad::Var ln2_scale, ln2_bias;
  Linear query, key, value, output;
  Linear mlp_in, mlp_out;
  ad::Var mlp_in_bias, mlp_out_bias;
};

LayerParams init_layer_params(int embed_dim, int mlp_dim, Rng& rng);

/// Wraps the QKV, attention-output and both MLP projections with rank-r
/// adapters and freezes the wrapped base weights. Returns true if r is not
/// smaller than the layer width (legal, but no parameter saving).
bool attach_lora(LayerParams& layer, int rank, double alpha, Rng& rng);

void append_parameters(const LayerParams& layer, const std::string& prefix, std::vector<NamedParam>& out);

/// Attention instrumentation, filled in when a non-null pointer is passed.
struct ForwardStats {
  std::int64_t peak_score_elements = 0;   // all heads' score matrices of one call
  std::int64_t peak_resident_tokens = 0;  // queries + every stored memory row
  std::vector<Index> key_counts;          // keys seen by each attention call
};

/// Multi-head cross-attention: queries from `queries`, keys and values from
/// `keys_values` (both already normalized), output projected by W_O.
ad::Var mca(const ad::Var& queries, const ad::Var& keys_values, const LayerParams& p, int heads,
            ForwardStats* stats = nullptr);

inline ad::Var msa(const ad::Var& normed, const LayerParams& p, int heads, ForwardStats* stats = nullptr) {
  return mca(normed, normed, p, heads, stats);
}

ad::Var mlp(const ad::Var& normed, const LayerParams& p);

/// One pre-norm block. `memory` (possibly empty) is stored already
/// normalized and is appended after LN(z) on the key/value side.
ad::Var transformer_layer(const ad::Var& z, const ad::Var& memory, const LayerParams& p, int heads,
                          ForwardStats* stats = nullptr);

}  // namespace mcvit
