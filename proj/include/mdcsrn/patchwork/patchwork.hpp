#pragma once

#include <functional>
#include <random>
#include <vector>

#include "mdcsrn/degrade/volume.hpp"

namespace mdcsrn {

struct PatchSpec {
  Index3 size{40, 40, 40};
  /// Voxels dropped from each face of a tile when stitching.
  std::int64_t margin = 0;
  /// Training pairs drawn per subject.
  std::int64_t count = 18;

  void validate() const {
    if (margin < 0) throw ConfigError("patch spec: margin must be non-negative");
    if (count < 1) throw ConfigError("patch spec: sample count must be >= 1");
    for (auto s : size)
      if (s <= 2 * margin) throw ConfigError("patch spec: patch extent must exceed twice the margin");
  }
};

struct Tile {
  Index3 origin;      // first voxel of the patch in the volume
  Index3 extent;      // patch size actually read (clipped for small volumes)
  Index3 core_begin;  // kept region, absolute volume coordinates
  Index3 core_end;    // exclusive
};

struct TileLayout {
  Index3 shape;
  std::vector<Tile> tiles;
};

namespace tiling {

struct Span {
  std::int64_t start, extent, core_begin, core_end;
};

// Interior tiles advance by size - 2*margin. The last tile is pulled back to
// end at the face, and its core starts where the previous core ended, so the
// cores tile [0, n) exactly. Face tiles keep their outer margin.
inline std::vector<Span> axis(std::int64_t n, std::int64_t size, std::int64_t margin) {
  if (n <= size) return {{0, n, 0, n}};
  const std::int64_t stride = size - 2 * margin;
  std::vector<std::int64_t> starts{0};
  while (starts.back() + size < n) starts.push_back(std::min(starts.back() + stride, n - size));
  std::vector<Span> spans;
  std::int64_t begin = 0;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const std::int64_t end = i + 1 == starts.size() ? n : starts[i] + size - margin;
    spans.push_back({starts[i], size, begin, end});
    begin = end;
  }
  return spans;
}

}  // namespace tiling

inline TileLayout plan_tiles(const Index3& shape, const PatchSpec& spec) {
  spec.validate();
  for (auto n : shape)
    if (n < 1) throw ShapeError("plan_tiles: empty volume " + to_string(shape));
  const auto a = tiling::axis(shape[0], spec.size[0], spec.margin);
  const auto b = tiling::axis(shape[1], spec.size[1], spec.margin);
  const auto c = tiling::axis(shape[2], spec.size[2], spec.margin);
  TileLayout layout{shape, {}};
  for (const auto& x : a)
    for (const auto& y : b)
      for (const auto& z : c)
        layout.tiles.push_back({{x.start, y.start, z.start},
                                {x.extent, y.extent, z.extent},
                                {x.core_begin, y.core_begin, z.core_begin},
                                {x.core_end, y.core_end, z.core_end}});
  return layout;
}

template <typename T>
std::vector<Volume<T>> extract(const TileLayout& layout, const Volume<T>& v) {
  if (v.shape != layout.shape)
    throw ShapeError("extract: volume " + to_string(v.shape) + " does not match layout " + to_string(layout.shape));
  std::vector<Volume<T>> out;
  out.reserve(layout.tiles.size());
  for (const auto& t : layout.tiles) out.push_back(crop(v, t.origin, t.extent));
  return out;
}

/// Writes each tile's core into the output; everything outside the cores is
/// ignored. Geometry metadata comes from `like`, when given.
template <typename T>
Volume<T> stitch(const TileLayout& layout, const std::vector<Volume<T>>& patches, const Volume<T>* like = nullptr) {
  if (patches.size() != layout.tiles.size())
    throw ShapeError("stitch: " + std::to_string(patches.size()) + " patches for " +
                     std::to_string(layout.tiles.size()) + " tiles");
  Volume<T> out = like ? like->template like<T>(layout.shape) : Volume<T>(layout.shape);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Tile& t = layout.tiles[i];
    if (patches[i].shape != t.extent)
      throw ShapeError("stitch: patch " + std::to_string(i) + " is " + to_string(patches[i].shape) + ", tile expects " +
                       to_string(t.extent));
    for (std::int64_t d = t.core_begin[0]; d < t.core_end[0]; ++d)
      for (std::int64_t h = t.core_begin[1]; h < t.core_end[1]; ++h)
        for (std::int64_t w = t.core_begin[2]; w < t.core_end[2]; ++w)
          out.at(d, h, w) = patches[i].at(d - t.origin[0], h - t.origin[1], w - t.origin[2]);
  }
  return out;
}

template <typename T>
struct PatchPair {
  Index3 origin;
  Volume<T> lr, hr;
};

/// Uniform in-bounds patch origins. `accept`, when set, can veto an origin
/// (e.g. to favour foreground); vetoed draws are retried a bounded number of
/// times before the last draw is taken anyway.
inline std::vector<Index3> sample_offsets(const Index3& shape, const Index3& size, std::int64_t count,
                                          std::uint64_t seed,
                                          const std::function<bool(const Index3&)>& accept = {}) {
  for (int a = 0; a < 3; ++a)
    if (size[a] > shape[a] || size[a] < 1)
      throw ConfigError("sample_training_patches: patch " + to_string(size) + " does not fit volume " +
                        to_string(shape));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> pick0(0, shape[0] - size[0]), pick1(0, shape[1] - size[1]),
      pick2(0, shape[2] - size[2]);
  std::vector<Index3> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    Index3 o;
    for (int tries = 0; tries < 50; ++tries) {
      o = {pick0(rng), pick1(rng), pick2(rng)};
      if (!accept || accept(o)) break;
    }
    out.push_back(o);
  }
  return out;
}

template <typename T>
std::vector<PatchPair<T>> sample_training_patches(const Volume<T>& lr, const Volume<T>& hr, const PatchSpec& spec,
                                                  std::uint64_t seed,
                                                  const std::function<bool(const Index3&)>& accept = {}) {
  spec.validate();
  if (lr.shape != hr.shape)
    throw ShapeError("sample_training_patches: LR " + to_string(lr.shape) + " vs HR " + to_string(hr.shape));
  std::vector<PatchPair<T>> out;
  for (const auto& o : sample_offsets(hr.shape, spec.size, spec.count, seed, accept))
    out.push_back({o, crop(lr, o, spec.size), crop(hr, o, spec.size)});
  return out;
}

}  // namespace mdcsrn
