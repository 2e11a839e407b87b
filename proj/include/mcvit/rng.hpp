#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "mcvit/tensor.hpp"

namespace mcvit {

/// Counter-based SplitMix64 stream. The i-th draw is a pure function of
/// (seed, i), so a stream can be replayed or split without shared state.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "splitmix64";

  explicit constexpr Rng(std::uint64_t seed = 0) : seed_(seed) {}

  constexpr std::uint64_t seed() const { return seed_; }
  constexpr std::uint64_t counter() const { return counter_; }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Draw at an arbitrary position without advancing the stream.
  constexpr std::uint64_t at(std::uint64_t position) const {
    return mix(seed_ + (position + 1) * kGamma);
  }

  constexpr std::uint64_t next_u64() { return at(counter_++); }

  /// Independent child stream keyed by `key`; does not advance this stream.
  constexpr Rng split(std::uint64_t key) const {
    return Rng(mix(seed_ ^ mix(key + kGamma)) + kGamma);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n) by rejection; n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal via Box-Muller (one draw discarded to stay stateless).
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  Matrix normal_matrix(Index rows, Index cols, double stddev) {
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * normal();
    return m;
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace mcvit
