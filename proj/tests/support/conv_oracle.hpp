#pragma once

#include <array>
#include <vector>

#include "mdcsrn/tensor.hpp"

namespace mdcsrn::testing {

// Direct nested-loop cross-correlation, independent of the im2col path.
inline Tensor<double> conv3d_loops(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                                   std::array<int, 3> stride, std::array<int, 3> pad) {
  const auto B = x.dim(0), Ci = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const auto Co = w.dim(0), KD = w.dim(2), KH = w.dim(3), KW = w.dim(4);
  const auto Do = (D + 2 * pad[0] - KD) / stride[0] + 1;
  const auto Ho = (H + 2 * pad[1] - KH) / stride[1] + 1;
  const auto Wo = (W + 2 * pad[2] - KW) / stride[2] + 1;
  Tensor<double> y = Tensor<double>::zeros({B, Co, Do, Ho, Wo});
  auto out = y.mutable_data();
  const auto xs = x.data();
  const auto ws = w.data();
  for (std::int64_t n = 0; n < B; ++n)
    for (std::int64_t o = 0; o < Co; ++o)
      for (std::int64_t z = 0; z < Do; ++z)
        for (std::int64_t yy = 0; yy < Ho; ++yy)
          for (std::int64_t xx = 0; xx < Wo; ++xx) {
            double acc = b.defined() ? b[o] : 0.0;
            for (std::int64_t c = 0; c < Ci; ++c)
              for (std::int64_t a = 0; a < KD; ++a)
                for (std::int64_t bb = 0; bb < KH; ++bb)
                  for (std::int64_t cc = 0; cc < KW; ++cc) {
                    const auto iz = z * stride[0] + a - pad[0];
                    const auto iy = yy * stride[1] + bb - pad[1];
                    const auto ix = xx * stride[2] + cc - pad[2];
                    if (iz < 0 || iz >= D || iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                    acc += xs[(((n * Ci + c) * D + iz) * H + iy) * W + ix] *
                           ws[(((o * Ci + c) * KD + a) * KH + bb) * KW + cc];
                  }
            out[(((n * Co + o) * Do + z) * Ho + yy) * Wo + xx] = acc;
          }
  return y;
}

}  // namespace mdcsrn::testing
