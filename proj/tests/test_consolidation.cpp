#include <algorithm>
#include <set>

#include "doctest.h"
#include "mcvit/consolidation.hpp"
#include "mcvit/gradcheck.hpp"
#include "mcvit/memory_bank.hpp"
#include "oracles.hpp"

using namespace mcvit;
using ad::Var;

namespace {

Matrix column(std::initializer_list<double> xs) {
  Matrix m(static_cast<Index>(xs.size()), 1);
  Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

std::multiset<std::vector<double>> row_multiset(const Matrix& m) {
  std::multiset<std::vector<double>> s;
  for (Index i = 0; i < m.rows(); ++i) s.insert(std::vector<double>(m.row(i).data(), m.row(i).data() + m.cols()));
  return s;
}

}  // namespace

TEST_CASE("random selection") {
  Rng rng(1);
  const Matrix z = rng.normal_matrix(8, 3, 1.0);
  Rng r1(5);
  CHECK(consolidate_random(z, 8, r1) == z);
  Rng r2(5);
  const Matrix one = rng.normal_matrix(1, 3, 1.0);
  CHECK(consolidate_random(one, 1, r2) == one);

  // Replay: partial Fisher-Yates with the same seeded stream.
  Rng draw(99), replay(99);
  const auto picked = sample_without_replacement(8, 2, draw);
  std::vector<Index> idx{0, 1, 2, 3, 4, 5, 6, 7};
  for (Index i = 0; i < 2; ++i) std::swap(idx[i], idx[i + static_cast<Index>(replay.below(8 - i))]);
  std::vector<Index> expect{idx[0], idx[1]};
  std::sort(expect.begin(), expect.end());
  CHECK(picked == expect);

  Rng r3(6);
  CHECK_THROWS_AS(consolidate_random(z, 9, r3), ConfigError);
}

TEST_CASE("coreset on the 1-D example") {
  const Matrix z = column({0, 1, 10});
  CHECK(coreset_indices(z, 2) == std::vector<Index>{2, 0});
  const Matrix out = consolidate_coreset(z, 2);
  CHECK(out(0, 0) == 10.0);
  CHECK(out(1, 0) == 0.0);

  // Brute force over every ordered pick sequence of length 2: the greedy
  // sequence is the unique one whose picks are each maximal in turn.
  const double mean = 11.0 / 3.0;
  int matches = 0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      if (a == b) continue;
      bool first_best = true, second_best = true;
      for (int c = 0; c < 3; ++c) {
        if (std::pow(z(c, 0) - mean, 2) > std::pow(z(a, 0) - mean, 2)) first_best = false;
        if (c != a && std::pow(z(c, 0) - z(a, 0), 2) > std::pow(z(b, 0) - z(a, 0), 2)) second_best = false;
      }
      if (first_best && second_best) {
        ++matches;
        CHECK(a == 2);
        CHECK(b == 0);
      }
    }
  CHECK(matches == 1);
  CHECK_THROWS_AS(coreset_indices(z, 4), ConfigError);
}

TEST_CASE("coreset with K=N is a permutation") {
  Rng rng(2);
  const Matrix z = rng.normal_matrix(10, 3, 1.0);
  auto picks = coreset_indices(z, 10);
  std::sort(picks.begin(), picks.end());
  for (Index i = 0; i < 10; ++i) CHECK(picks[i] == i);
  CHECK(row_multiset(consolidate_coreset(z, 10)) == row_multiset(z));
}

TEST_CASE("coreset picks are greedy-optimal by exhaustive scan") {
  Rng rng(3);
  const Matrix z = rng.normal_matrix(16, 3, 1.0);
  const auto picks = coreset_indices(z, 5);
  const auto g = oracle::from(z);
  for (std::size_t i = 1; i < picks.size(); ++i) {
    auto score = [&](Index k) {
      double m = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < i; ++j) m = std::min(m, oracle::sqdist(g[k], g[picks[j]]));
      return m;
    };
    for (Index k = 0; k < 16; ++k)
      if (std::find(picks.begin(), picks.begin() + static_cast<long>(i), k) == picks.begin() + static_cast<long>(i))
        CHECK(score(k) <= score(picks[i]));
  }
}

TEST_CASE("kmeans") {
  SUBCASE("zero iterations is random selection") {
    Rng rng(4);
    const Matrix z = rng.normal_matrix(12, 2, 1.0);
    Rng a(8), b(8);
    CHECK(consolidate_kmeans(z, 4, 0, a) == consolidate_random(z, 4, b));
  }
  SUBCASE("hand case {0,0,10,10}") {
    const Matrix z = column({0, 0, 10, 10});
    auto r = kmeans(z, {0, 2}, 1);
    CHECK(r.centroids(0, 0) == 0.0);
    CHECK(r.centroids(1, 0) == 10.0);
    auto stable = kmeans(z, {0, 2}, 5);
    CHECK(stable.centroids == r.centroids);
    CHECK(r.objective.back() == 0.0);
  }
  SUBCASE("empty cluster keeps its centroid") {
    auto dup = kmeans(column({1, 1, 1}), {0, 1}, 3);  // tie -> cluster 0 takes all
    CHECK(dup.centroids(1, 0) == 1.0);
    CHECK(dup.weights(1, 1) == 1.0);
  }
  SUBCASE("bit-for-bit against the reference implementation") {
    Rng rng(5);
    const Matrix z = rng.normal_matrix(32, 4, 1.0);
    Rng init_rng(77);
    const auto init = sample_without_replacement(32, 4, init_rng);
    auto r = kmeans(z, init, 5);
    const auto ref = oracle::kmeans(oracle::from(z), std::vector<long>(init.begin(), init.end()), 5);
    CHECK(r.centroids == oracle::to(ref));
    CHECK((r.weights * z - r.centroids).cwiseAbs().maxCoeff() < 1e-12);
    for (std::size_t i = 1; i < r.objective.size(); ++i) CHECK(r.objective[i] <= r.objective[i - 1]);
  }
  SUBCASE("K=N with no iterations keeps every row") {
    Rng rng(6);
    const Matrix z = rng.normal_matrix(7, 2, 1.0);
    Rng r(1);
    CHECK(row_multiset(consolidate_kmeans(z, 7, 0, r)) == row_multiset(z));
  }
}

TEST_CASE("differentiable consolidate agrees with the kernels and passes gradcheck") {
  Rng rng(7);
  Var z = Var::leaf(rng.normal_matrix(10, 3, 1.0));
  const Var w = Var::constant(rng.normal_matrix(4, 3, 1.0));
  for (auto method : {ConsolidationMethod::random, ConsolidationMethod::coreset, ConsolidationMethod::kmeans}) {
    ConsolidationConfig cfg{method, 4, 5, 0};
    Rng a(3), b(3);
    const Matrix direct = method == ConsolidationMethod::random    ? consolidate_random(z.value(), 4, b)
                          : method == ConsolidationMethod::coreset ? consolidate_coreset(z.value(), 4)
                                                                   : consolidate_kmeans(z.value(), 4, 5, b);
    CHECK(consolidate(z, cfg, a).value() == direct);
    std::vector<NamedParam> params{{"z", z}};
    auto report = gradcheck(
        [&] {
          Rng r(3);
          return ad::sum(ad::mul(consolidate(z, cfg, r), w));
        },
        params);
    CHECK(report.passed);
  }
  ConsolidationConfig none{ConsolidationMethod::none, 1, 5, 0};
  Rng r(0);
  CHECK(consolidate(z, none, r).node() == z.node());
}

TEST_CASE("deterministic given seed") {
  Rng rng(8);
  const Matrix z = rng.normal_matrix(20, 3, 1.0);
  Rng a(123), b(123);
  CHECK(consolidate_kmeans(z, 5, 5, a) == consolidate_kmeans(z, 5, 5, b));
}

TEST_CASE("memory bank: unbounded keeps everything in segment order") {
  MemoryBank bank(2, MemoryPolicy::unbounded());
  CHECK_FALSE(bank.memory(0));
  for (int s = 0; s < 3; ++s) bank.append(0, Var::constant(Matrix::Constant(4, 2, s)), s);
  CHECK(bank.size(0) == 12);
  CHECK(bank.size(1) == 0);
  for (Index i = 0; i < 12; ++i) {
    CHECK(bank.memory(0).value()(i, 0) == static_cast<double>(i / 4));
    CHECK(bank.segment_tags(0)[i] == i / 4);
  }
}

TEST_CASE("memory bank: last_n") {
  MemoryBank bank(1, MemoryPolicy::last_n(2));
  for (int s = 0; s < 4; ++s) bank.append(0, Var::constant(Matrix::Constant(3, 1, s)), s);
  CHECK(bank.size(0) == 6);
  CHECK(bank.memory(0).value() == (Matrix(6, 1) << 2, 2, 2, 3, 3, 3).finished());

  MemoryBank big(1, MemoryPolicy::last_n(5));
  for (int s = 0; s < 20; ++s) {
    big.append(0, Var::constant(Matrix::Zero(512, 1)), s);
    CHECK(big.size(0) <= 2560);
  }
  CHECK(big.size(0) == 2560);
  CHECK(MemoryPolicy::last_n(5).token_cap(512) == 2560);
}

TEST_CASE("memory bank: global_random reservoir") {
  MemoryBank bank(1, MemoryPolicy::global_random(64), Rng(4));
  for (int s = 0; s < 10; ++s) {
    Matrix rows(32, 1);
    for (Index i = 0; i < 32; ++i) rows(i, 0) = s * 32 + i;
    bank.append(0, Var::constant(rows), s);
    CHECK(bank.size(0) == std::min<Index>(64, 32 * (s + 1)));
  }
  std::set<double> distinct;
  for (Index i = 0; i < 64; ++i) {
    distinct.insert(bank.memory(0).value()(i, 0));
    CHECK(bank.segment_tags(0)[i] == static_cast<int>(bank.memory(0).value()(i, 0)) / 32);
  }
  CHECK(distinct.size() == 64);

  // Inclusion frequency per segment over seeded trials: 1/10 of the cap each.
  std::vector<int> per_segment(10, 0);
  const int trials = 300;
  for (int t = 0; t < trials; ++t) {
    MemoryBank b(1, MemoryPolicy::global_random(64), Rng(1000 + t));
    for (int s = 0; s < 10; ++s) b.append(0, Var::constant(Matrix::Zero(32, 1)), s);
    for (int tag : b.segment_tags(0)) ++per_segment[tag];
  }
  // Hypergeometric(320, 32, 64) per trial: mean 6.4, variance ~4.62.
  const double sigma = std::sqrt(trials * 64.0 * 0.1 * 0.9 * 256.0 / 319.0);
  for (int c : per_segment) CHECK(std::abs(c - trials * 6.4) <= 3 * sigma);
}
