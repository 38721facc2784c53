#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mdcsrn/patchwork/patchwork.hpp"

namespace mdcsrn {
namespace {

Volume<double> random_volume(Index3 shape, std::uint64_t seed) {
  Volume<double> v(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& x : v.data) x = u(rng);
  return v;
}

// Every voxel claimed exactly once; every patch in bounds and containing its core.
void expect_partition(const TileLayout& layout, std::int64_t margin) {
  const Index3 n = layout.shape;
  std::vector<int> owners(static_cast<std::size_t>(voxels(n)), 0);
  std::int64_t core_total = 0;
  for (const auto& t : layout.tiles) {
    for (int a = 0; a < 3; ++a) {
      ASSERT_GE(t.origin[a], 0);
      ASSERT_LE(t.origin[a] + t.extent[a], n[a]);
      ASSERT_GE(t.core_begin[a], t.origin[a]);
      ASSERT_LE(t.core_end[a], t.origin[a] + t.extent[a]);
      ASSERT_LT(t.core_begin[a], t.core_end[a]);
      // margins are dropped except at a volume face
      if (t.core_begin[a] > 0) {
        EXPECT_GE(t.core_begin[a] - t.origin[a], margin);
      }
      if (t.core_end[a] < n[a]) {
        EXPECT_GE(t.origin[a] + t.extent[a] - t.core_end[a], margin);
      }
    }
    core_total += (t.core_end[0] - t.core_begin[0]) * (t.core_end[1] - t.core_begin[1]) * (t.core_end[2] - t.core_begin[2]);
    for (std::int64_t d = t.core_begin[0]; d < t.core_end[0]; ++d)
      for (std::int64_t h = t.core_begin[1]; h < t.core_end[1]; ++h)
        for (std::int64_t w = t.core_begin[2]; w < t.core_end[2]; ++w) ++owners[(d * n[1] + h) * n[2] + w];
  }
  EXPECT_EQ(core_total, voxels(n));
  for (int c : owners) ASSERT_EQ(c, 1);
}

// ---- sampling ----------------------------------------------------------------

TEST(Sampling, FixedSeedIsReproducible) {
  EXPECT_EQ(sample_offsets({60, 50, 70}, {40, 40, 40}, 18, 7), sample_offsets({60, 50, 70}, {40, 40, 40}, 18, 7));
  EXPECT_NE(sample_offsets({60, 50, 70}, {40, 40, 40}, 18, 7), sample_offsets({60, 50, 70}, {40, 40, 40}, 18, 8));
}

TEST(Sampling, OffsetsStayInBounds) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed)
    for (const auto& o : sample_offsets({48, 48, 48}, {40, 40, 40}, 18, seed))
      for (int a = 0; a < 3; ++a) {
        ASSERT_GE(o[a], 0);
        ASSERT_LE(o[a] + 40, 48);
      }
}

TEST(Sampling, OffsetsAreUniform) {
  // 9 admissible offsets per axis; each bin within 3 sigma of the multinomial mean
  const std::int64_t n = 10000;
  const auto offs = sample_offsets({48, 48, 48}, {40, 40, 40}, n, 2024);
  const double p = 1.0 / 9, mean = n * p, sigma = std::sqrt(n * p * (1 - p));
  for (int a = 0; a < 3; ++a) {
    std::vector<std::int64_t> hist(9, 0);
    for (const auto& o : offs) ++hist[o[a]];
    for (auto c : hist) EXPECT_LE(std::abs(double(c) - mean), 3 * sigma) << "axis " << a;
  }
}

TEST(Sampling, PairsShareOffsets) {
  Volume<double> hr = random_volume({30, 20, 25}, 1);
  Volume<double> lr = hr;
  for (auto& v : lr.data) v += 1000;
  PatchSpec spec;
  spec.size = {8, 6, 7};
  spec.count = 5;
  auto pairs = sample_training_patches(lr, hr, spec, 3);
  ASSERT_EQ(pairs.size(), 5u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.hr.shape, spec.size);
    for (std::size_t i = 0; i < p.hr.data.size(); ++i) EXPECT_EQ(p.lr.data[i], p.hr.data[i] + 1000);
    EXPECT_EQ(p.hr.at(0, 0, 0), hr.at(p.origin[0], p.origin[1], p.origin[2]));
  }
}

TEST(Sampling, AcceptHookFiltersOrigins) {
  auto offs = sample_offsets({40, 40, 40}, {10, 10, 10}, 50, 4, [](const Index3& o) { return o[0] >= 20; });
  for (const auto& o : offs) EXPECT_GE(o[0], 20);
}

TEST(Sampling, RejectsOversizedPatchesAndMismatchedPairs) {
  PatchSpec spec;
  Volume<double> small({30, 48, 48});
  EXPECT_THROW(sample_training_patches(small, small, spec, 1), ConfigError);
  Volume<double> other({48, 48, 48});
  Volume<double> big({48, 48, 49});
  EXPECT_THROW(sample_training_patches(other, big, spec, 1), ShapeError);
  spec.margin = 20;
  EXPECT_THROW(spec.validate(), ConfigError);
}

// ---- tiling ------------------------------------------------------------------

TEST(Tiling, SmallVolumeIsOneTile) {
  PatchSpec spec{{70, 70, 70}, 3};
  auto layout = plan_tiles({64, 64, 64}, spec);
  ASSERT_EQ(layout.tiles.size(), 1u);
  EXPECT_EQ(layout.tiles[0].extent, (Index3{64, 64, 64}));
  EXPECT_EQ(layout.tiles[0].core_end, (Index3{64, 64, 64}));
  Volume<double> v = random_volume({64, 64, 64}, 5);
  EXPECT_EQ(stitch(layout, extract(layout, v)).data, v.data);
}

TEST(Tiling, InteriorStrideIsSizeMinusTwoMargins) {
  auto spans = tiling::axis(128, 70, 3);
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0].start, 0);
  EXPECT_EQ(spans[0].core_end, 67);
  EXPECT_EQ(spans[1].start, 58);  // shifted inward from 64
  EXPECT_EQ(spans[1].core_begin, 67);
  EXPECT_EQ(spans[1].core_end, 128);
  auto many = tiling::axis(300, 70, 3);
  for (std::size_t i = 1; i + 1 < many.size(); ++i) EXPECT_EQ(many[i].start - many[i - 1].start, 64);
  expect_partition(plan_tiles({128, 128, 128}, PatchSpec{{70, 70, 70}, 3}), 3);
}

TEST(Tiling, ZeroMarginIsPlainGrid) {
  auto layout = plan_tiles({120, 80, 40}, PatchSpec{{40, 40, 40}, 0});
  EXPECT_EQ(layout.tiles.size(), 6u);
  for (const auto& t : layout.tiles) {
    EXPECT_EQ(t.core_begin, t.origin);
    for (int a = 0; a < 3; ++a) EXPECT_EQ(t.core_end[a], t.origin[a] + t.extent[a]);
  }
  expect_partition(layout, 0);
}

TEST(Tiling, RandomShapeSweepPartitionsAndRoundTrips) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::int64_t> len(40, 160), size(12, 70), margin(0, 5);
  for (int trial = 0; trial < 20; ++trial) {
    const Index3 shape{len(rng), len(rng), len(rng)};
    PatchSpec spec{{size(rng), size(rng), size(rng)}, margin(rng)};
    SCOPED_TRACE(to_string(shape) + " patch " + to_string(spec.size) + " margin " + std::to_string(spec.margin));
    auto layout = plan_tiles(shape, spec);
    expect_partition(layout, spec.margin);
    Volume<float> v = random_volume(shape, 100 + trial).cast<float>();
    EXPECT_EQ(stitch(layout, extract(layout, v)).data, v.data);
  }
}

TEST(Tiling, VoxelsOutsideCoresNeverReachTheOutput) {
  auto layout = plan_tiles({50, 45, 61}, PatchSpec{{20, 18, 24}, 3});
  Volume<double> v = random_volume({50, 45, 61}, 6);
  auto patches = extract(layout, v);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Tile& t = layout.tiles[i];
    for (std::int64_t d = 0; d < t.extent[0]; ++d)
      for (std::int64_t h = 0; h < t.extent[1]; ++h)
        for (std::int64_t w = 0; w < t.extent[2]; ++w) {
          const Index3 p{t.origin[0] + d, t.origin[1] + h, t.origin[2] + w};
          bool in_core = true;
          for (int a = 0; a < 3; ++a) in_core = in_core && p[a] >= t.core_begin[a] && p[a] < t.core_end[a];
          if (!in_core) patches[i].at(d, h, w) = 1e9;
        }
  }
  EXPECT_EQ(stitch(layout, patches).data, v.data);
}

TEST(Tiling, StitchKeepsGeometryOfReference) {
  Volume<double> v = random_volume({10, 10, 10}, 7);
  v.spacing = {0.7, 0.8, 0.9};
  auto layout = plan_tiles(v.shape, PatchSpec{{6, 6, 6}, 1});
  auto out = stitch(layout, extract(layout, v), &v);
  EXPECT_EQ(out.spacing, v.spacing);
  EXPECT_EQ(out.data, v.data);
}

TEST(Tiling, MismatchedPatchesAreRejected) {
  auto layout = plan_tiles({20, 20, 20}, PatchSpec{{10, 10, 10}, 1});
  auto patches = extract(layout, random_volume({20, 20, 20}, 8));
  patches[1] = Volume<double>({10, 10, 9});
  EXPECT_THROW(stitch(layout, patches), ShapeError);
  patches.pop_back();
  EXPECT_THROW(stitch(layout, patches), ShapeError);
  EXPECT_THROW(extract(layout, random_volume({20, 20, 21}, 9)), ShapeError);
}

}  // namespace
}  // namespace mdcsrn
