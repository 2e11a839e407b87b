#include "mcvit/train.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "mcvit/parallel.hpp"
#include "mcvit/rng.hpp"

namespace mcvit {

Objective parse_objective(const std::string& name) {
  if (name == "batch_nce") return Objective::batch_nce;
  if (name == "class_nce") return Objective::class_nce;
  throw ConfigError("unknown objective '" + name + "' (expected batch_nce or class_nce)");
}

std::string to_string(Objective o) { return o == Objective::batch_nce ? "batch_nce" : "class_nce"; }

void OptimizerConfig::validate() const {
  if (!(base_learning_rate >= 0.0)) throw ConfigError("base_learning_rate must be >= 0");
  if (linear_warmup_steps < 0) throw ConfigError("linear_warmup_steps must be >= 0");
  if (!(weight_decay_rate >= 0.0)) throw ConfigError("weight_decay_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

double learning_rate_at(const OptimizerConfig& cfg, int step, int total_steps) {
  const double base = cfg.base_learning_rate;
  const int warm = cfg.linear_warmup_steps;
  if (step < warm) return base * static_cast<double>(step) / static_cast<double>(warm);
  const int decay = total_steps - warm;
  if (decay <= 0) return base;
  const double progress = std::min(1.0, static_cast<double>(step - warm) / static_cast<double>(decay));
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_grad_norm(std::span<const ad::Var> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.has_grad()) sq += p.grad().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : params)
      if (p.has_grad()) p.node()->grad *= s;
  }
  return norm;
}

AdamW::AdamW(std::vector<ad::Var> params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, t_), c2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Matrix& w = params_[i].mutable_value();
    if (params_[i].has_grad()) {
      const Matrix& g = params_[i].grad();
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseAbs2();
    } else {
      m_[i] *= cfg_.beta1;
      v_[i] *= cfg_.beta2;
    }
    if (lr == 0.0) continue;
    w.array() -= lr * ((m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.epsilon) +
                       cfg_.weight_decay_rate * w.array());
  }
}

std::vector<NamedParam> VideoTextModel::parameters() const {
  auto out = params.parameters();
  if (captions.requires_grad()) out.push_back({"captions", captions});
  return out;
}

std::vector<std::pair<std::string, ad::Var>> VideoTextModel::state() const {
  std::vector<std::pair<std::string, ad::Var>> out{{"embed.projection", params.embed.projection},
                                                   {"embed.positional", params.embed.positional}};
  auto linear = [&](const std::string& name, const Linear& l) {
    out.emplace_back(name + ".weight", l.weight);
    if (l.lora) {
      out.emplace_back(name + ".lora_down", l.lora->down);
      out.emplace_back(name + ".lora_up", l.lora->up);
    }
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& p = params.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    out.emplace_back(pre + "ln1.scale", p.ln1_scale);
    out.emplace_back(pre + "ln1.bias", p.ln1_bias);
    linear(pre + "attn.q", p.query);
    linear(pre + "attn.k", p.key);
    linear(pre + "attn.v", p.value);
    linear(pre + "attn.o", p.output);
    out.emplace_back(pre + "ln2.scale", p.ln2_scale);
    out.emplace_back(pre + "ln2.bias", p.ln2_bias);
    linear(pre + "mlp.in", p.mlp_in);
    out.emplace_back(pre + "mlp.in.bias", p.mlp_in_bias);
    linear(pre + "mlp.out", p.mlp_out);
    out.emplace_back(pre + "mlp.out.bias", p.mlp_out_bias);
  }
  out.emplace_back("captions", captions);
  return out;
}

VideoTextModel init_video_text_model(const ModelConfig& cfg, int classes, std::uint64_t seed) {
  if (classes < 1) throw ConfigError("need at least one class");
  Rng caption_rng = Rng(seed).split(0xc0de);
  return {cfg, init_model_params(cfg, seed),
          ad::Var::leaf(caption_rng.normal_matrix(classes, cfg.embed_dim(), 1.0))};
}

void TrainConfig::validate() const {
  if (training_steps < 0) throw ConfigError("training_steps must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (eval_size < 0) throw ConfigError("eval_size must be >= 0");
  if (!(contrastive.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(contrastive.label_smoothing >= 0.0 && contrastive.label_smoothing < 1.0))
    throw ConfigError("label_smoothing must lie in [0, 1)");
  optimizer.validate();
}

ad::Var embed_batch(const VideoTextModel& model, std::span<const Sample> batch) {
  std::vector<ad::Var> rows(batch.size());
  const bool grad = ad::grad_enabled();
  parallel_for(batch.size(), [&](std::size_t i) {
    std::optional<ad::NoGradGuard> guard;
    if (!grad) guard.emplace();
    rows[i] = encode_video(batch[i].video, model.config, model.params).pooled;
  });
  return ad::concat_rows(rows);
}

ad::Var batch_loss(const VideoTextModel& model, const ad::Var& video, std::span<const int> labels,
                   Objective objective, const ContrastiveOptions& opts) {
  if (static_cast<std::size_t>(video.rows()) != labels.size())
    throw ShapeError("batch has " + std::to_string(video.rows()) + " embeddings but " +
                     std::to_string(labels.size()) + " labels");
  std::vector<Index> idx(labels.begin(), labels.end());
  for (Index i : idx)
    if (i < 0 || i >= model.captions.rows()) throw ShapeError("label out of range");
  if (objective == Objective::batch_nce) return contrastive_loss(video, ad::gather_rows(model.captions, idx), opts);

  // Every class caption is a candidate; the true one sits at the label.
  const ad::Var v = opts.normalize ? ad::l2_normalize_rows(video) : video;
  const ad::Var c = opts.normalize ? ad::l2_normalize_rows(model.captions) : model.captions;
  const ad::Var logp =
      ad::log_softmax_rows(ad::scale(ad::matmul(v, ad::transpose(c)), 1.0 / opts.temperature));
  Matrix onehot = Matrix::Zero(video.rows(), model.captions.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) onehot(static_cast<Index>(i), idx[i]) = 1.0;
  return ad::scale(ad::sum(ad::mul(logp, ad::Var::constant(std::move(onehot)))),
                   -1.0 / static_cast<double>(video.rows()));
}

Index predict_class(const VideoTextModel& model, const RowVector& video, const ContrastiveOptions& opts) {
  if (!opts.normalize) return zero_shot_predict(video, model.captions.value());
  return zero_shot_predict(video, model.captions.value().rowwise().normalized());
}

namespace {

double batch_accuracy(const VideoTextModel& model, const Matrix& video, std::span<const Sample> batch,
                      const ContrastiveOptions& opts) {
  int hits = 0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    hits += predict_class(model, video.row(static_cast<Index>(i)), opts) == batch[i].label;
  return static_cast<double>(hits) / static_cast<double>(batch.size());
}

}  // namespace

double evaluate_accuracy(const VideoTextModel& model, const SyntheticTask& task, std::uint64_t split,
                         int count, const ContrastiveOptions& opts) {
  if (count <= 0) return 0.0;
  std::vector<Sample> samples;
  for (int i = 0; i < count; ++i) samples.push_back(task.sample(split, static_cast<std::uint64_t>(i)));
  ad::NoGradGuard no_grad;
  const Matrix video = embed_batch(model, samples).value();
  return batch_accuracy(model, video, samples, opts);
}

TrainResult train_loop(VideoTextModel& model, const SyntheticTask& task, const TrainConfig& cfg,
                       const std::function<void(const MetricsRow&)>& on_step) {
  cfg.validate();
  if (model.captions.rows() != task.classes())
    throw ConfigError("caption table has " + std::to_string(model.captions.rows()) + " rows but the task has " +
                      std::to_string(task.classes()) + " classes");
  std::vector<ad::Var> params;
  for (const auto& p : model.parameters()) params.push_back(p.var);
  AdamW opt(params, cfg.optimizer);
  const Rng batch_rng = Rng(cfg.seed).split(0xba7c);

  TrainResult result;
  for (int step = 0; step < cfg.training_steps; ++step) {
    Rng rng = batch_rng.split(static_cast<std::uint64_t>(step));
    std::vector<Sample> batch;
    std::vector<int> labels;
    for (int i = 0; i < cfg.batch_size; ++i) {
      const std::uint64_t index = cfg.train_size > 0
                                      ? rng.below(cfg.train_size)
                                      : static_cast<std::uint64_t>(step) * cfg.batch_size + i;
      batch.push_back(task.sample(SyntheticTask::kTrainSplit, index));
      labels.push_back(batch.back().label);
    }

    for (auto& p : params) p.zero_grad();
    const ad::Var video = embed_batch(model, batch);
    const ad::Var loss = batch_loss(model, video, labels, cfg.objective, cfg.contrastive);
    const double value = loss.item();
    if (!std::isfinite(value))
      throw DivergenceError("loss became " + std::to_string(value) + " at step " + std::to_string(step));
    ad::backward(loss);
    const double norm = clip_grad_norm(params, cfg.optimizer.gradient_clip);
    if (!std::isfinite(norm))
      throw DivergenceError("gradient norm became " + std::to_string(norm) + " at step " + std::to_string(step));
    opt.step(learning_rate_at(cfg.optimizer, step, cfg.training_steps));

    MetricsRow row{step, value, batch_accuracy(model, video.value(), batch, cfg.contrastive)};
    result.log.push_back(row);
    if (on_step) on_step(row);
  }
  result.heldout_accuracy =
      evaluate_accuracy(model, task, SyntheticTask::kHeldOutSplit, cfg.eval_size, cfg.contrastive);
  return result;
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss,accuracy\n";
  for (const auto& r : rows) out << r.step << ',' << r.loss << ',' << r.accuracy << '\n';
  return out.str();
}

}  // namespace mcvit
