#pragma once

#include <span>

#include "mcvit/autodiff.hpp"

namespace mcvit {

struct ContrastiveOptions {
  double temperature = 1.0;
  bool normalize = true;  // L2-normalize both sides before the dot products
  double label_smoothing = 0.0;
};

/// Symmetric in-batch NCE. Row i of `video` pairs with row i of `text`;
/// returns the B x 1 column of per-item losses (video->text plus text->video).
ad::Var contrastive_terms(const ad::Var& video, const ad::Var& text, const ContrastiveOptions& opts = {});

/// Mean of contrastive_terms.
ad::Var contrastive_loss(const ad::Var& video, const ad::Var& text, const ContrastiveOptions& opts = {});

/// Video->text term against an explicit negative set (1 x d rows).
ad::Var contrastive_loss_hard_negatives(const ad::Var& anchor, const ad::Var& positive,
                                        std::span<const ad::Var> negatives, const ContrastiveOptions& opts = {});

/// argmax_i video . candidates_i; the lowest index wins exact ties.
Index zero_shot_predict(const RowVector& video, const Matrix& candidates);

}  // namespace mcvit
