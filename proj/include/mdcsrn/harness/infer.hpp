#pragma once

#include <chrono>

#include "mdcsrn/model/generator.hpp"
#include "mdcsrn/patchwork/patchwork.hpp"

namespace mdcsrn {

struct InferOptions {
  PatchSpec tiles{{70, 70, 70}, 3};
  /// Train mode normalizes each tile with its own statistics; the model's
  /// running statistics are left untouched either way.
  BnMode bn = BnMode::kEval;
};

template <typename T>
struct InferResult {
  Volume<T> sr;
  double seconds = 0;
  std::size_t tiles = 0;
};

/// Tiled super-resolution of a whole (already interpolated) LR volume.
template <typename T>
InferResult<T> infer_volume(const Generator<T>& g, const Volume<T>& lr, const InferOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  lr.validate();
  opt.tiles.validate();
  const TileLayout layout = plan_tiles(lr.shape, opt.tiles);
  Generator<T> work = g;  // private BN state; parameters are shared, read-only
  NoGradGuard no_grad;
  std::vector<Volume<T>> out;
  out.reserve(layout.tiles.size());
  for (const auto& tile : extract(layout, lr)) {
    const Tensor<T> y = work.forward(to_tensor<T>(tile), opt.bn);
    Volume<T> v = tile.template like<T>(tile.shape);
    auto d = y.data();
    std::copy(d.begin(), d.end(), v.data.begin());
    out.push_back(std::move(v));
  }
  InferResult<T> r{stitch(layout, out, &lr), 0.0, layout.tiles.size()};
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace mdcsrn
