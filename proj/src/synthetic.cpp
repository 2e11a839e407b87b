#include "mcvit/synthetic.hpp"

#include <string>

namespace mcvit {

SyntheticTask::SyntheticTask(VideoShape video, int channels, int segments, SyntheticTaskConfig cfg)
    : video_(video), channels_(channels), segments_(segments), cfg_(cfg) {
  if (cfg_.classes < 2) throw ConfigError("synthetic task needs at least 2 classes");
  if (segments_ < 2) throw ConfigError("synthetic task needs at least 2 segments");
  if (video_.frames % segments_ != 0) throw ConfigError("frames must divide into segments");
}

double SyntheticTask::motif_level(int motif) const {
  return cfg_.amplitude * (2.0 * motif / (cfg_.classes - 1) - 1.0);
}

Sample SyntheticTask::sample(std::uint64_t split, std::uint64_t index) const {
  Rng rng = Rng(cfg_.seed).split(split).split(index);
  Sample s;
  s.label = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg_.classes)));
  const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg_.classes)));
  s.video = Tensor({video_.frames, video_.height, video_.width, channels_});
  for (auto& x : s.video.data()) x = cfg_.noise * rng.normal();

  const int frames_per_segment = video_.frames / segments_;
  const std::size_t frame_size = static_cast<std::size_t>(video_.height) * video_.width * channels_;
  for (int f = 0; f < video_.frames; ++f) {
    const int tau = f / frames_per_segment;
    const double level = motif_level((start + tau * s.label) % cfg_.classes);
    for (std::size_t i = 0; i < frame_size; ++i) s.video[f * frame_size + i] += level;
  }
  return s;
}

}  // namespace mcvit
