#include "mcvit/contrastive.hpp"

#include <vector>

namespace mcvit {

namespace {

ad::Var prepare(const ad::Var& x, const ContrastiveOptions& opts) {
  return opts.normalize ? ad::l2_normalize_rows(x) : x;
}

Matrix targets(Index batch, double smoothing) {
  Matrix t = Matrix::Constant(batch, batch, smoothing / static_cast<double>(batch));
  t.diagonal().array() += 1.0 - smoothing;
  return t;
}

}  // namespace

ad::Var contrastive_terms(const ad::Var& video, const ad::Var& text, const ContrastiveOptions& opts) {
  if (video.rows() < 1) throw ShapeError("contrastive loss needs a non-empty batch");
  if (video.rows() != text.rows() || video.cols() != text.cols())
    throw ShapeError("video and text embeddings must have the same shape");
  if (!(opts.temperature > 0.0)) throw ConfigError("temperature must be positive");
  const ad::Var v = prepare(video, opts), t = prepare(text, opts);
  const ad::Var logits = ad::scale(ad::matmul(v, ad::transpose(t)), 1.0 / opts.temperature);
  const ad::Var q = ad::Var::constant(targets(video.rows(), opts.label_smoothing));
  const ad::Var v2t = ad::row_sums(ad::mul(ad::log_softmax_rows(logits), q));
  const ad::Var t2v = ad::row_sums(ad::mul(ad::log_softmax_rows(ad::transpose(logits)), q));
  return ad::scale(ad::add(v2t, t2v), -1.0);
}

ad::Var contrastive_loss(const ad::Var& video, const ad::Var& text, const ContrastiveOptions& opts) {
  const ad::Var terms = contrastive_terms(video, text, opts);
  return ad::scale(ad::sum(terms), 1.0 / static_cast<double>(terms.rows()));
}

ad::Var contrastive_loss_hard_negatives(const ad::Var& anchor, const ad::Var& positive,
                                        std::span<const ad::Var> negatives, const ContrastiveOptions& opts) {
  if (negatives.empty()) throw ConfigError("hard-negative loss needs at least one negative");
  if (!(opts.temperature > 0.0)) throw ConfigError("temperature must be positive");
  std::vector<ad::Var> candidates{positive};
  candidates.insert(candidates.end(), negatives.begin(), negatives.end());
  const ad::Var c = prepare(ad::concat_rows(candidates), opts);
  const ad::Var a = prepare(anchor, opts);
  const ad::Var logits = ad::scale(ad::matmul(a, ad::transpose(c)), 1.0 / opts.temperature);
  return ad::scale(ad::slice_cols(ad::log_softmax_rows(logits), 0, 1), -1.0);
}

Index zero_shot_predict(const RowVector& video, const Matrix& candidates) {
  if (candidates.rows() < 1) throw ShapeError("zero-shot prediction needs at least one candidate");
  if (candidates.cols() != video.cols()) throw ShapeError("candidate width differs from the video embedding");
  const Eigen::VectorXd scores = candidates * video.transpose();
  Index best = 0;
  for (Index i = 1; i < scores.size(); ++i)
    if (scores(i) > scores(best)) best = i;
  return best;
}

}  // namespace mcvit
