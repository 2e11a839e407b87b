#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcvit/contrastive.hpp"
#include "mcvit/runtime.hpp"
#include "mcvit/synthetic.hpp"

namespace mcvit {

enum class Objective {
  batch_nce,  // symmetric in-batch loss against each item's class caption
  class_nce,  // video->text loss with every other class caption as a negative
};

Objective parse_objective(const std::string& name);
std::string to_string(Objective o);

struct OptimizerConfig {
  double base_learning_rate = 1e-3;
  int linear_warmup_steps = 0;
  double gradient_clip = 2.0;  // global norm; <= 0 disables
  double weight_decay_rate = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Linear warmup from 0 to the base rate over the warmup steps, then cosine
/// decay to 0 at `total_steps`.
double learning_rate_at(const OptimizerConfig& cfg, int step, int total_steps);

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping. Parameters without a gradient count as 0.
double clip_grad_norm(std::span<const ad::Var> params, double max_norm);

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<ad::Var> params, OptimizerConfig cfg);
  void step(double learning_rate);
  int steps_taken() const { return t_; }

 private:
  std::vector<ad::Var> params_;
  std::vector<Matrix> m_, v_;
  OptimizerConfig cfg_;
  int t_ = 0;
};

/// Video encoder plus a learnable caption row per class.
struct VideoTextModel {
  ModelConfig config;
  ModelParams params;
  ad::Var captions;  // classes x d

  std::vector<NamedParam> parameters() const;
  /// Every tensor including frozen ones, with unique names, in a fixed order.
  std::vector<std::pair<std::string, ad::Var>> state() const;
};

VideoTextModel init_video_text_model(const ModelConfig& cfg, int classes, std::uint64_t seed);

struct TrainConfig {
  int training_steps = 200;
  int batch_size = 8;
  OptimizerConfig optimizer;
  ContrastiveOptions contrastive;
  Objective objective = Objective::batch_nce;
  // 0 draws fresh samples every step; otherwise batches come from a fixed
  // pool of this many training samples.
  std::uint64_t train_size = 0;
  int eval_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricsRow {
  int step = 0;
  double loss = 0.0;
  double accuracy = 0.0;  // zero-shot accuracy on the step's batch
};

struct TrainResult {
  std::vector<MetricsRow> log;
  double heldout_accuracy = 0.0;
};

/// Pooled, unnormalized video embeddings for a batch, one row per sample.
ad::Var embed_batch(const VideoTextModel& model, std::span<const Sample> batch);

/// Loss for one batch under the chosen objective.
ad::Var batch_loss(const VideoTextModel& model, const ad::Var& video, std::span<const int> labels,
                   Objective objective, const ContrastiveOptions& opts);

/// Zero-shot class prediction against the caption table.
Index predict_class(const VideoTextModel& model, const RowVector& video, const ContrastiveOptions& opts);

double evaluate_accuracy(const VideoTextModel& model, const SyntheticTask& task, std::uint64_t split,
                         int count, const ContrastiveOptions& opts);

/// Throws DivergenceError when the loss stops being finite.
TrainResult train_loop(VideoTextModel& model, const SyntheticTask& task, const TrainConfig& cfg,
                       const std::function<void(const MetricsRow&)>& on_step = {});

/// "step,loss,accuracy" with one row per step.
std::string metrics_csv(std::span<const MetricsRow> rows);

}  // namespace mcvit
