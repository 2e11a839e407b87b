#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcvit/autodiff.hpp"
#include "mcvit/rng.hpp"

namespace mcvit {

enum class PolicyKind { unbounded, last_n, global_random };

struct MemoryPolicy {
  PolicyKind kind = PolicyKind::unbounded;
  int segments = 0;             // last_n: number of most recent segments kept
  std::int64_t cap_tokens = 0;  // global_random: reservoir size per layer

  static MemoryPolicy unbounded() { return {}; }
  static MemoryPolicy last_n(int n) { return {PolicyKind::last_n, n, 0}; }
  static MemoryPolicy global_random(std::int64_t cap) { return {PolicyKind::global_random, 0, cap}; }

  /// Per-layer token cap given K rows per segment, or nullopt if unbounded.
  std::optional<std::int64_t> token_cap(std::int64_t rows_per_segment) const;
  void validate() const;
};

PolicyKind parse_policy_kind(const std::string& name);
std::string to_string(PolicyKind k);

/// Per-layer store of normalized memories from past segments. Rows are kept
/// in segment order; each row carries the index of the segment it came from.
class MemoryBank {
 public:
  MemoryBank(int layers, MemoryPolicy policy, Rng rng = Rng(0));

  /// Appends `rows` (already normalized) produced by `segment`, then applies
  /// the policy. global_random runs reservoir sampling over every row ever
  /// appended to this layer.
  void append(int layer, const ad::Var& rows, int segment);

  /// Drops rows outside the last_n window; no-op for the other policies.
  void enforce_policy(int layer);

  /// Stored rows for `layer`; an empty (null) Var if nothing is stored.
  const ad::Var& memory(int layer) const { return layers_.at(layer).rows; }
  Index size(int layer) const;
  std::int64_t total_size() const;
  const std::vector<int>& segment_tags(int layer) const { return layers_.at(layer).tags; }
  int layers() const { return static_cast<int>(layers_.size()); }
  const MemoryPolicy& policy() const { return policy_; }

 private:
  struct Layer {
    ad::Var rows;
    std::vector<int> tags;
    std::uint64_t seen = 0;
    Rng rng;
  };

  MemoryPolicy policy_;
  std::vector<Layer> layers_;
};

}  // namespace mcvit
