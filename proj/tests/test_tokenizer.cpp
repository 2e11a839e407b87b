#include "doctest.h"
#include "mcvit/rng.hpp"
#include "mcvit/tokenizer.hpp"

using namespace mcvit;
using ad::Var;

namespace {

Tensor random_video(int T, int H, int W, int C, std::uint64_t seed) {
  Rng rng(seed);
  Tensor v({T, H, W, C});
  for (auto& x : v.data()) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("token counts") {
  PatchConfig p{2, 2, 2, 1, 4};
  CHECK(VideoShape{4, 4, 4}.token_count(p) == 8);

  PatchConfig big{2, 16, 16, 3, 8};
  auto plan = SegmentPlan::make(VideoShape{128, 256, 256}, big, 8);
  CHECK(plan.frames_per_segment == 16);
  CHECK(plan.tokens_per_segment == 2048);
  CHECK(2048 / 128 == 16);

  CHECK_THROWS_AS((VideoShape{5, 4, 4}.token_count(p)), ConfigError);
  CHECK_THROWS_AS((SegmentPlan::make(VideoShape{4, 4, 4}, p, 3)), ConfigError);
  CHECK_THROWS_AS((SegmentPlan::make(VideoShape{4, 4, 4}, PatchConfig{4, 2, 2, 1, 4}, 2)), ConfigError);
}

TEST_CASE("patch_embed of a zero video is the positional table") {
  PatchConfig p{2, 2, 2, 1, 4};
  VideoShape shape{4, 4, 4};
  Rng rng(1);
  auto params = init_embed_params(shape, p, rng);
  const Var z = patch_embed(Tensor({4, 4, 4, 1}), p, params);
  CHECK(z.rows() == 8);
  CHECK(z.value() == params.positional.value());
}

TEST_CASE("patch enumeration is time-major then raster") {
  PatchConfig p{1, 1, 1, 1, 1};
  Tensor v({2, 2, 3, 1});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const Matrix patches = extract_patches(v, p);
  for (Index i = 0; i < patches.rows(); ++i) CHECK(patches(i, 0) == static_cast<double>(i));

  PatchConfig q{1, 2, 2, 2, 1};
  Tensor w({1, 2, 2, 2});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<double>(i);
  const Matrix one = extract_patches(w, q);
  CHECK(one.rows() == 1);
  for (Index c = 0; c < one.cols(); ++c) CHECK(one(0, c) == static_cast<double>(c));
}

TEST_CASE("patch_embed is linear in the video without positions") {
  PatchConfig p{2, 2, 2, 2, 5};
  VideoShape shape{4, 4, 4};
  Rng rng(2);
  auto params = init_embed_params(shape, p, rng);
  params.positional = Var::constant(Matrix::Zero(8, 5));
  const Tensor a = random_video(4, 4, 4, 2, 10), b = random_video(4, 4, 4, 2, 11);
  Tensor mix(a.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 2.5 * a[i] - 0.75 * b[i];
  const Matrix lhs = patch_embed(mix, p, params).value();
  const Matrix rhs = 2.5 * patch_embed(a, p, params).value() - 0.75 * patch_embed(b, p, params).value();
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("patch_embed rejects mismatched inputs") {
  PatchConfig p{2, 2, 2, 1, 4};
  Rng rng(3);
  auto params = init_embed_params(VideoShape{4, 4, 4}, p, rng);
  CHECK_THROWS_AS(patch_embed(Tensor(std::vector<std::int64_t>{3, 4, 4, 1}), p, params), ConfigError);
  CHECK_THROWS_AS(patch_embed(Tensor(std::vector<std::int64_t>{4, 4, 4, 2}), p, params), ShapeError);
  CHECK_THROWS_AS(patch_embed(Tensor(std::vector<std::int64_t>{8, 4, 4, 1}), p, params), ShapeError);
}

TEST_CASE("interpolate_rows") {
  Rng rng(4);
  const Matrix table = rng.normal_matrix(4, 3, 1.0);
  CHECK(interpolate_rows(table, 4) == table);

  Matrix two(2, 2);
  two << 0, 2, 4, 10;
  const Matrix mid = interpolate_rows(two, 3);
  CHECK(mid.row(0) == two.row(0));
  CHECK(mid(1, 0) == 2.0);
  CHECK(mid(1, 1) == 6.0);
  CHECK(mid.row(2) == two.row(1));

  // Scalar piecewise-linear oracle per channel.
  const Matrix up = interpolate_rows(table, 7);
  for (Index c = 0; c < 3; ++c)
    for (int j = 0; j < 7; ++j) {
      const double pos = j * 3.0 / 6.0;
      const int lo = std::min(static_cast<int>(pos), 2);
      const double expect = table(lo, c) + (pos - lo) * (table(lo + 1, c) - table(lo, c));
      CHECK(std::abs(up(j, c) - expect) < 1e-14);
    }
  CHECK_THROWS_AS(interpolate_rows(table, 1), ConfigError);
}

TEST_CASE("interpolate_pos_emb works per spatial position") {
  Rng rng(5);
  const Matrix pos = rng.normal_matrix(2 * 3, 4, 1.0);  // 2 temporal x 3 spatial
  const Matrix up = interpolate_pos_emb(pos, 3, 3);
  CHECK(up.rows() == 9);
  for (int s = 0; s < 3; ++s) {
    CHECK(up.row(s) == pos.row(s));
    CHECK(up.row(6 + s) == pos.row(3 + s));
    CHECK((up.row(3 + s) - 0.5 * (pos.row(s) + pos.row(3 + s))).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("split_segments") {
  Rng rng(6);
  const Var z = Var::constant(rng.normal_matrix(8, 3, 1.0));
  SegmentPlan one{1, 4, 8};
  CHECK(split_segments(z, one).front().value() == z.value());

  SegmentPlan two{2, 2, 4};
  auto parts = split_segments(z, two);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].value() == z.value().topRows(4));
  CHECK(parts[1].value() == z.value().bottomRows(4));
  CHECK_THROWS_AS((split_segments(z, SegmentPlan{3, 1, 3})), ShapeError);

  // Property: split then concatenate is the identity for every divisor.
  for (int n_t : {1, 6, 12, 24}) {
    const Var x = Var::constant(rng.normal_matrix(n_t, 2, 1.0));
    for (int s = 1; s <= n_t; ++s) {
      if (n_t % s) continue;
      auto pieces = split_segments(x, SegmentPlan{s, 1, n_t / s});
      CHECK(ad::concat_rows(pieces).value() == x.value());
    }
  }
}

TEST_CASE("segments see their slice of the full-length positional table") {
  PatchConfig p{1, 2, 2, 1, 4};
  VideoShape shape{4, 4, 4};
  Rng rng(7);
  auto params = init_embed_params(shape, p, rng);
  const auto plan = SegmentPlan::make(shape, p, 2);
  auto segs = split_segments(patch_embed(Tensor({4, 4, 4, 1}), p, params), plan);
  CHECK(segs[1].value() == params.positional.value().bottomRows(plan.tokens_per_segment));
}
