#include "mcvit/blocks.hpp"

#include <array>
#include <cmath>

#include "mcvit/rng.hpp"

namespace mcvit {

ad::Var lora_linear(const ad::Var& x, const Linear& layer) {
  ad::Var base = ad::matmul(x, layer.weight);
  if (!layer.lora) return base;
  const auto& a = *layer.lora;
  return base + ad::scale(ad::matmul(ad::matmul(x, a.down), a.up), 1.0 / a.alpha);
}

namespace {

Linear init_linear(int d_in, int d_out, Rng& rng) {
  return {ad::Var::leaf(rng.normal_matrix(d_in, d_out, 1.0 / std::sqrt(static_cast<double>(d_in)))), std::nullopt};
}

bool wrap(Linear& layer, int rank, double alpha, Rng& rng) {
  const Index d_in = layer.weight.rows(), d_out = layer.weight.cols();
  layer.lora = LoraAdapter{
      ad::Var::leaf(rng.normal_matrix(d_in, rank, 1.0 / std::sqrt(static_cast<double>(d_in)))),
      ad::Var::leaf(Matrix::Zero(rank, d_out)), alpha};
  layer.weight.set_requires_grad(false);
  return rank >= std::min(d_in, d_out);
}

void push(std::vector<NamedParam>& out, const std::string& name, const ad::Var& v) {
  if (v.requires_grad()) out.push_back({name, v});
}

void push_linear(std::vector<NamedParam>& out, const std::string& name, const Linear& l) {
  push(out, name, l.weight);
  if (l.lora) {
    push(out, name + ".lora", l.lora->down);
    push(out, name + ".lora", l.lora->up);
  }
}

}  // namespace

LayerParams init_layer_params(int embed_dim, int mlp_dim, Rng& rng) {
  const int d = embed_dim;
  LayerParams p;
  p.ln1_scale = ad::Var::leaf(Matrix::Ones(1, d));
  p.ln1_bias = ad::Var::leaf(Matrix::Zero(1, d));
  p.ln2_scale = ad::Var::leaf(Matrix::Ones(1, d));
  p.ln2_bias = ad::Var::leaf(Matrix::Zero(1, d));
  p.query = init_linear(d, d, rng);
  p.key = init_linear(d, d, rng);
  p.value = init_linear(d, d, rng);
  p.output = init_linear(d, d, rng);
  p.mlp_in = init_linear(d, mlp_dim, rng);
  p.mlp_out = init_linear(mlp_dim, d, rng);
  p.mlp_in_bias = ad::Var::leaf(Matrix::Zero(1, mlp_dim));
  p.mlp_out_bias = ad::Var::leaf(Matrix::Zero(1, d));
  return p;
}

bool attach_lora(LayerParams& layer, int rank, double alpha, Rng& rng) {
  if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("LoRA alpha must be positive");
  bool wasteful = false;
  for (Linear* l : {&layer.query, &layer.key, &layer.value, &layer.output, &layer.mlp_in, &layer.mlp_out})
    wasteful = wrap(*l, rank, alpha, rng) || wasteful;
  return wasteful;
}

void append_parameters(const LayerParams& p, const std::string& prefix, std::vector<NamedParam>& out) {
  push(out, prefix + "ln1", p.ln1_scale);
  push(out, prefix + "ln1", p.ln1_bias);
  push_linear(out, prefix + "attn.q", p.query);
  push_linear(out, prefix + "attn.k", p.key);
  push_linear(out, prefix + "attn.v", p.value);
  push_linear(out, prefix + "attn.o", p.output);
  push(out, prefix + "ln2", p.ln2_scale);
  push(out, prefix + "ln2", p.ln2_bias);
  push_linear(out, prefix + "mlp.in", p.mlp_in);
  push(out, prefix + "mlp.in", p.mlp_in_bias);
  push_linear(out, prefix + "mlp.out", p.mlp_out);
  push(out, prefix + "mlp.out", p.mlp_out_bias);
}

ad::Var mca(const ad::Var& queries, const ad::Var& keys_values, const LayerParams& p, int heads,
            ForwardStats* stats) {
  const Index d = queries.cols();
  if (keys_values.cols() != d) throw ShapeError("mca: query and key/value widths differ");
  if (heads < 1 || d % heads != 0)
    throw ConfigError("embed_dim " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
  const Index head_dim = d / heads;
  const double logit_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  const ad::Var q = lora_linear(queries, p.query);
  const ad::Var k = lora_linear(keys_values, p.key);
  const ad::Var v = lora_linear(keys_values, p.value);

  std::vector<ad::Var> outs;
  outs.reserve(heads);
  std::int64_t score_elements = 0;
  for (int h = 0; h < heads; ++h) {
    const ad::Var qh = ad::slice_cols(q, h * head_dim, head_dim);
    const ad::Var kh = ad::slice_cols(k, h * head_dim, head_dim);
    const ad::Var vh = ad::slice_cols(v, h * head_dim, head_dim);
    const ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), logit_scale);
    score_elements += scores.value().size();
    outs.push_back(ad::matmul(ad::softmax_rows(scores), vh));
  }
  if (stats) {
    stats->peak_score_elements = std::max(stats->peak_score_elements, score_elements);
    stats->key_counts.push_back(keys_values.rows());
  }
  const ad::Var merged = heads == 1 ? outs.front() : ad::concat_cols(outs);
  return lora_linear(merged, p.output);
}

ad::Var mlp(const ad::Var& normed, const LayerParams& p) {
  const ad::Var hidden = ad::gelu(ad::add_row(lora_linear(normed, p.mlp_in), p.mlp_in_bias));
  return ad::add_row(lora_linear(hidden, p.mlp_out), p.mlp_out_bias);
}

ad::Var transformer_layer(const ad::Var& z, const ad::Var& memory, const LayerParams& p, int heads,
                          ForwardStats* stats) {
  const ad::Var normed = ad::layer_norm(z, p.ln1_scale, p.ln1_bias);
  ad::Var attended;
  if (memory && memory.rows() > 0) {
    const std::array<ad::Var, 2> kv{normed, memory};
    attended = mca(normed, ad::concat_rows(kv), p, heads, stats);
  } else {
    attended = msa(normed, p, heads, stats);
  }
  const ad::Var y = attended + z;
  return mlp(ad::layer_norm(y, p.ln2_scale, p.ln2_bias), p) + y;
}

}  // namespace mcvit
