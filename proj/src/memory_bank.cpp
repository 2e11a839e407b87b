#include "mcvit/memory_bank.hpp"

#include <algorithm>
#include <array>

namespace mcvit {

std::optional<std::int64_t> MemoryPolicy::token_cap(std::int64_t rows_per_segment) const {
  switch (kind) {
    case PolicyKind::unbounded: return std::nullopt;
    case PolicyKind::last_n: return static_cast<std::int64_t>(segments) * rows_per_segment;
    case PolicyKind::global_random: return cap_tokens;
  }
  return std::nullopt;
}

void MemoryPolicy::validate() const {
  if (kind == PolicyKind::last_n && segments < 1) throw ConfigError("last_n policy needs segments >= 1");
  if (kind == PolicyKind::global_random && cap_tokens < 1) throw ConfigError("global_random policy needs cap >= 1");
}

PolicyKind parse_policy_kind(const std::string& name) {
  if (name == "unbounded") return PolicyKind::unbounded;
  if (name == "last_n") return PolicyKind::last_n;
  if (name == "global_random") return PolicyKind::global_random;
  throw ConfigError("unknown memory policy '" + name + "'");
}

std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::unbounded: return "unbounded";
    case PolicyKind::last_n: return "last_n";
    case PolicyKind::global_random: return "global_random";
  }
  return "?";
}

MemoryBank::MemoryBank(int layers, MemoryPolicy policy, Rng rng) : policy_(policy) {
  policy_.validate();
  layers_.resize(static_cast<std::size_t>(std::max(layers, 0)));
  for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l].rng = rng.split(l);
}

Index MemoryBank::size(int layer) const {
  const auto& rows = layers_.at(layer).rows;
  return rows ? rows.rows() : 0;
}

std::int64_t MemoryBank::total_size() const {
  std::int64_t n = 0;
  for (int l = 0; l < layers(); ++l) n += size(l);
  return n;
}

void MemoryBank::append(int layer, const ad::Var& rows, int segment) {
  Layer& L = layers_.at(layer);
  const Index old_n = size(layer);
  ad::Var combined = rows;
  if (old_n > 0) {
    const std::array<ad::Var, 2> parts{L.rows, rows};
    combined = ad::concat_rows(parts);
  }
  std::vector<int> tags = L.tags;
  tags.insert(tags.end(), static_cast<std::size_t>(rows.rows()), segment);

  if (policy_.kind != PolicyKind::global_random) {
    L.rows = combined;
    L.tags = std::move(tags);
    L.seen += static_cast<std::uint64_t>(rows.rows());
    enforce_policy(layer);
    return;
  }

  // Reservoir: slot s holds a row of `combined`.
  const auto cap = static_cast<std::uint64_t>(policy_.cap_tokens);
  std::vector<Index> slots(static_cast<std::size_t>(old_n));
  for (Index i = 0; i < old_n; ++i) slots[i] = i;
  bool changed = false;
  for (Index r = 0; r < rows.rows(); ++r) {
    const Index source = old_n + r;
    if (L.seen < cap) {
      slots.push_back(source);
      changed = true;
    } else {
      const std::uint64_t j = L.rng.below(L.seen + 1);
      if (j < cap) {
        slots[j] = source;
        changed = true;
      }
    }
    ++L.seen;
  }
  if (!changed) return;
  // Any fixed slot order keeps the reservoir uniform; ascending keeps rows in
  // segment order.
  std::sort(slots.begin(), slots.end());
  std::vector<int> kept_tags(slots.size());
  for (std::size_t s = 0; s < slots.size(); ++s) kept_tags[s] = tags[slots[s]];
  L.rows = ad::gather_rows(combined, slots);
  L.tags = std::move(kept_tags);
}

void MemoryBank::enforce_policy(int layer) {
  if (policy_.kind != PolicyKind::last_n) return;
  Layer& L = layers_.at(layer);
  if (L.tags.empty()) return;
  std::vector<int> distinct = L.tags;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (static_cast<int>(distinct.size()) <= policy_.segments) return;
  const int oldest_kept = distinct[distinct.size() - static_cast<std::size_t>(policy_.segments)];
  const auto first = std::find(L.tags.begin(), L.tags.end(), oldest_kept) - L.tags.begin();
  L.rows = ad::slice_rows(L.rows, first, static_cast<Index>(L.tags.size()) - first);
  L.tags.erase(L.tags.begin(), L.tags.begin() + first);
}

}  // namespace mcvit
