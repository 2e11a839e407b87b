#pragma once

#include <cstdint>

#include "mcvit/rng.hpp"
#include "mcvit/tokenizer.hpp"

namespace mcvit {

struct SyntheticTaskConfig {
  int classes = 4;
  double amplitude = 1.0;  // largest motif offset
  double noise = 0.5;      // stddev of the background noise
  std::uint64_t seed = 0;
};

struct Sample {
  Tensor video;  // frames x height x width x channels
  int label = 0;
};

/// Cross-segment motif task. There are `classes` motifs, motif m being a
/// flat brightness offset evenly spaced in [-amplitude, amplitude]. Segment
/// tau shows motif (start + tau * label) mod classes over Gaussian noise,
/// with `start` uniform. Any single segment shows a uniformly drawn motif,
/// so the label is only recoverable by relating at least two segments.
class SyntheticTask {
 public:
  SyntheticTask(VideoShape video, int channels, int segments, SyntheticTaskConfig cfg);

  /// Deterministic in (seed, split, index).
  Sample sample(std::uint64_t split, std::uint64_t index) const;

  int classes() const { return cfg_.classes; }
  double motif_level(int motif) const;
  const VideoShape& video() const { return video_; }

  static constexpr std::uint64_t kTrainSplit = 0;
  static constexpr std::uint64_t kHeldOutSplit = 1;

 private:
  VideoShape video_;
  int channels_;
  int segments_;
  SyntheticTaskConfig cfg_;
};

}  // namespace mcvit
