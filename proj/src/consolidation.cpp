#include "mcvit/consolidation.hpp"

#include <algorithm>

namespace mcvit {

ConsolidationMethod parse_consolidation_method(const std::string& name) {
  if (name == "none") return ConsolidationMethod::none;
  if (name == "random") return ConsolidationMethod::random;
  if (name == "coreset") return ConsolidationMethod::coreset;
  if (name == "kmeans") return ConsolidationMethod::kmeans;
  throw ConfigError("unknown consolidation method '" + name + "'");
}

std::string to_string(ConsolidationMethod m) {
  switch (m) {
    case ConsolidationMethod::none: return "none";
    case ConsolidationMethod::random: return "random";
    case ConsolidationMethod::coreset: return "coreset";
    case ConsolidationMethod::kmeans: return "kmeans";
  }
  return "?";
}

void ConsolidationConfig::validate(Index tokens_per_segment) const {
  if (kmeans_iters < 0) throw ConfigError("kmeans_iters must be >= 0");
  if (method != ConsolidationMethod::none) check_memory_count(tokens_per_segment, memories_per_segment);
}

std::vector<Index> sample_without_replacement(Index n, Index k, Rng& rng) {
  check_memory_count(n, k);
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < k; ++i) {
    const Index j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

Matrix take_rows(const Matrix& z, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), z.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = z.row(rows[i]);
  return out;
}

}  // namespace

Matrix consolidate_random(const Matrix& z, Index k, Rng& rng) {
  return take_rows(z, sample_without_replacement(z.rows(), k, rng));
}

Matrix consolidate_coreset(const Matrix& z, Index k) { return take_rows(z, coreset_indices(z, k)); }

Matrix consolidate_kmeans(const Matrix& z, Index k, int iters, Rng& rng) {
  return kmeans(z, sample_without_replacement(z.rows(), k, rng), iters).centroids;
}

ad::Var consolidate(const ad::Var& z, const ConsolidationConfig& cfg, Rng& rng) {
  const Index k = cfg.memories_per_segment;
  switch (cfg.method) {
    case ConsolidationMethod::none:
      return z;
    case ConsolidationMethod::random: {
      const auto rows = sample_without_replacement(z.rows(), k, rng);
      return ad::gather_rows(z, rows);
    }
    case ConsolidationMethod::coreset: {
      const auto rows = coreset_indices(z.value(), k);
      return ad::gather_rows(z, rows);
    }
    case ConsolidationMethod::kmeans: {
      auto r = kmeans(z.value(), sample_without_replacement(z.rows(), k, rng), cfg.kmeans_iters);
      return ad::mix_rows(r.weights, z, std::move(r.centroids));
    }
  }
  throw ConfigError("unhandled consolidation method");
}

}  // namespace mcvit
