#pragma once

#include <algorithm>
#include <array>
#include <cstring>
#include <vector>

#include "mdcsrn/tensor/gemm.hpp"
#include "mdcsrn/tensor/ops.hpp"

namespace mdcsrn {

struct Conv3dOptions {
  Index3 stride{1, 1, 1};
  /// Negative entries mean "same": kernel / 2.
  Index3 padding{-1, -1, -1};
};

namespace conv {

struct Geometry {
  std::int64_t batch, in_ch, out_ch;
  Index3 in, kernel, stride, pad, out;

  std::int64_t in_vox() const { return in[0] * in[1] * in[2]; }
  std::int64_t out_vox() const { return out[0] * out[1] * out[2]; }
  std::int64_t ker_vox() const { return kernel[0] * kernel[1] * kernel[2]; }
  std::int64_t col_rows() const { return in_ch * ker_vox(); }
  bool pointwise() const {
    return ker_vox() == 1 && stride == Index3{1, 1, 1} && pad == Index3{0, 0, 0};
  }
};

inline Geometry make_geometry(const Shape& x, const Shape& w, const Conv3dOptions& opt) {
  if (x.size() != 5) throw ShapeError("conv3d: input must be [B,C,D,H,W], got " + to_string(x));
  if (w.size() != 5) throw ShapeError("conv3d: weight must be [Cout,Cin,kd,kh,kw], got " + to_string(w));
  if (x[1] != w[1])
    throw ShapeError("conv3d: input has " + std::to_string(x[1]) + " channels, weight expects " + std::to_string(w[1]));
  Geometry g{};
  g.batch = x[0];
  g.in_ch = x[1];
  g.out_ch = w[0];
  for (int a = 0; a < 3; ++a) {
    g.in[a] = x[2 + a];
    g.kernel[a] = w[2 + a];
    if (g.kernel[a] != 1 && g.kernel[a] != 3)
      throw ShapeError("conv3d: kernel extents must be 1 or 3, got " + to_string(w));
    g.stride[a] = opt.stride[a];
    if (g.stride[a] < 1) throw ShapeError("conv3d: stride must be positive");
    g.pad[a] = opt.padding[a] < 0 ? g.kernel[a] / 2 : opt.padding[a];
    const std::int64_t span = g.in[a] + 2 * g.pad[a] - g.kernel[a];
    if (span < 0) throw ShapeError("conv3d: input " + to_string(x) + " smaller than kernel support");
    g.out[a] = span / g.stride[a] + 1;
  }
  return g;
}

// Rows of the column buffer are (ci, kz, ky, kx); columns are output voxels
// of depth slabs [z0, z1).
template <typename T>
void im2col(const Geometry& g, const T* x, std::int64_t z0, std::int64_t z1, T* col) {
  const auto [D, H, W] = g.in;
  const auto [Ho, Wo] = std::array{g.out[1], g.out[2]};
  const std::int64_t n = (z1 - z0) * Ho * Wo;
  std::int64_t r = 0;
  for (std::int64_t ci = 0; ci < g.in_ch; ++ci)
    for (std::int64_t a = 0; a < g.kernel[0]; ++a)
      for (std::int64_t b = 0; b < g.kernel[1]; ++b)
        for (std::int64_t c = 0; c < g.kernel[2]; ++c, ++r) {
          T* row = col + r * n;
          // valid ox range: 0 <= ox*sw + c - pw < W
          const std::int64_t sw = g.stride[2];
          const std::int64_t off = c - g.pad[2];
          std::int64_t lo = off >= 0 ? 0 : (-off + sw - 1) / sw;
          std::int64_t hi = std::min<std::int64_t>(Wo, (W - 1 - off) / sw + 1);
          if (W - 1 - off < 0) hi = 0;
          lo = std::min(lo, Wo);
          hi = std::max(hi, lo);
          for (std::int64_t oz = z0; oz < z1; ++oz) {
            const std::int64_t iz = oz * g.stride[0] + a - g.pad[0];
            for (std::int64_t oy = 0; oy < Ho; ++oy) {
              T* dst = row + ((oz - z0) * Ho + oy) * Wo;
              const std::int64_t iy = oy * g.stride[1] + b - g.pad[1];
              if (iz < 0 || iz >= D || iy < 0 || iy >= H) {
                std::fill_n(dst, Wo, T(0));
                continue;
              }
              const T* src = x + ((ci * D + iz) * H + iy) * W + off;
              std::fill_n(dst, lo, T(0));
              if (sw == 1) {
                std::memcpy(dst + lo, src + lo, sizeof(T) * (hi - lo));
              } else {
                for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * sw];
              }
              std::fill(dst + hi, dst + Wo, T(0));
            }
          }
        }
}

// Adjoint of im2col: scatter-add columns back onto the input grid.
template <typename T>
void col2im(const Geometry& g, const T* col, std::int64_t z0, std::int64_t z1, T* x) {
  const auto [D, H, W] = g.in;
  const auto [Ho, Wo] = std::array{g.out[1], g.out[2]};
  const std::int64_t n = (z1 - z0) * Ho * Wo;
  std::int64_t r = 0;
  for (std::int64_t ci = 0; ci < g.in_ch; ++ci)
    for (std::int64_t a = 0; a < g.kernel[0]; ++a)
      for (std::int64_t b = 0; b < g.kernel[1]; ++b)
        for (std::int64_t c = 0; c < g.kernel[2]; ++c, ++r) {
          const T* row = col + r * n;
          const std::int64_t sw = g.stride[2];
          const std::int64_t off = c - g.pad[2];
          std::int64_t lo = off >= 0 ? 0 : (-off + sw - 1) / sw;
          std::int64_t hi = std::min<std::int64_t>(Wo, (W - 1 - off) / sw + 1);
          if (W - 1 - off < 0) hi = 0;
          lo = std::min(lo, Wo);
          hi = std::max(hi, lo);
          for (std::int64_t oz = z0; oz < z1; ++oz) {
            const std::int64_t iz = oz * g.stride[0] + a - g.pad[0];
            if (iz < 0 || iz >= D) continue;
            for (std::int64_t oy = 0; oy < Ho; ++oy) {
              const std::int64_t iy = oy * g.stride[1] + b - g.pad[1];
              if (iy < 0 || iy >= H) continue;
              const T* src = row + ((oz - z0) * Ho + oy) * Wo;
              T* dst = x + ((ci * D + iz) * H + iy) * W + off;
              for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox * sw] += src[ox];
            }
          }
        }
}

// Output depth slabs per im2col chunk, bounding the column buffer.
inline std::int64_t slab_chunk(const Geometry& g) {
  constexpr std::int64_t kBudget = std::int64_t{1} << 22;
  const std::int64_t per_slab = g.col_rows() * g.out[1] * g.out[2];
  return std::clamp<std::int64_t>(kBudget / std::max<std::int64_t>(per_slab, 1), 1, g.out[0]);
}

template <typename T>
void forward(const Geometry& g, const T* x, const T* w, T* y) {
  const int cout = static_cast<int>(g.out_ch);
  const int rows = static_cast<int>(g.col_rows());
  const std::int64_t nout = g.out_vox(), nin = g.in_vox();
  if (g.pointwise()) {
    for (std::int64_t b = 0; b < g.batch; ++b)
      blas::gemm(false, false, cout, static_cast<int>(nout), rows, T(1), w, rows, x + b * g.in_ch * nin,
                 static_cast<int>(nin), T(0), y + b * g.out_ch * nout, static_cast<int>(nout));
    return;
  }
  const std::int64_t chunk = slab_chunk(g);
  const std::int64_t slab = g.out[1] * g.out[2];
  std::vector<T> col(static_cast<std::size_t>(g.col_rows() * chunk * slab));
  for (std::int64_t b = 0; b < g.batch; ++b)
    for (std::int64_t z0 = 0; z0 < g.out[0]; z0 += chunk) {
      const std::int64_t z1 = std::min(g.out[0], z0 + chunk);
      const int n = static_cast<int>((z1 - z0) * slab);
      im2col(g, x + b * g.in_ch * nin, z0, z1, col.data());
      blas::gemm(false, false, cout, n, rows, T(1), w, rows, col.data(), n, T(0),
                 y + b * g.out_ch * nout + z0 * slab, static_cast<int>(nout));
    }
}

template <typename T>
void input_grad(const Geometry& g, const T* gy, const T* w, T* gx) {
  const int cout = static_cast<int>(g.out_ch);
  const int rows = static_cast<int>(g.col_rows());
  const std::int64_t nout = g.out_vox(), nin = g.in_vox();
  if (g.pointwise()) {
    for (std::int64_t b = 0; b < g.batch; ++b)
      blas::gemm(true, false, rows, static_cast<int>(nin), cout, T(1), w, rows, gy + b * g.out_ch * nout,
                 static_cast<int>(nout), T(0), gx + b * g.in_ch * nin, static_cast<int>(nin));
    return;
  }
  std::fill_n(gx, g.batch * g.in_ch * nin, T(0));
  const std::int64_t chunk = slab_chunk(g);
  const std::int64_t slab = g.out[1] * g.out[2];
  std::vector<T> col(static_cast<std::size_t>(g.col_rows() * chunk * slab));
  for (std::int64_t b = 0; b < g.batch; ++b)
    for (std::int64_t z0 = 0; z0 < g.out[0]; z0 += chunk) {
      const std::int64_t z1 = std::min(g.out[0], z0 + chunk);
      const int n = static_cast<int>((z1 - z0) * slab);
      blas::gemm(true, false, rows, n, cout, T(1), w, rows, gy + b * g.out_ch * nout + z0 * slab,
                 static_cast<int>(nout), T(0), col.data(), n);
      col2im(g, col.data(), z0, z1, gx + b * g.in_ch * nin);
    }
}

template <typename T>
void weight_grad(const Geometry& g, const T* x, const T* gy, T* gw) {
  const int cout = static_cast<int>(g.out_ch);
  const int rows = static_cast<int>(g.col_rows());
  const std::int64_t nout = g.out_vox(), nin = g.in_vox();
  std::fill_n(gw, g.out_ch * g.col_rows(), T(0));
  if (g.pointwise()) {
    for (std::int64_t b = 0; b < g.batch; ++b)
      blas::gemm(false, true, cout, rows, static_cast<int>(nout), T(1), gy + b * g.out_ch * nout,
                 static_cast<int>(nout), x + b * g.in_ch * nin, static_cast<int>(nin), T(1), gw, rows);
    return;
  }
  const std::int64_t chunk = slab_chunk(g);
  const std::int64_t slab = g.out[1] * g.out[2];
  std::vector<T> col(static_cast<std::size_t>(g.col_rows() * chunk * slab));
  for (std::int64_t b = 0; b < g.batch; ++b)
    for (std::int64_t z0 = 0; z0 < g.out[0]; z0 += chunk) {
      const std::int64_t z1 = std::min(g.out[0], z0 + chunk);
      const int n = static_cast<int>((z1 - z0) * slab);
      im2col(g, x + b * g.in_ch * nin, z0, z1, col.data());
      blas::gemm(false, true, cout, rows, n, T(1), gy + b * g.out_ch * nout + z0 * slab, static_cast<int>(nout),
                 col.data(), n, T(1), gw, rows);
    }
}

}  // namespace conv

template <typename T>
Tensor<T> conv3d_input_grad(const Tensor<T>& gy, const Tensor<T>& w, const Shape& x_shape, const Conv3dOptions& opt);
template <typename T>
Tensor<T> conv3d_weight_grad(const Tensor<T>& x, const Tensor<T>& gy, const Shape& w_shape, const Conv3dOptions& opt);

/// Cross-correlation without bias. Differentiable to any order in x and w.
template <typename T>
Tensor<T> conv3d_nobias(const Tensor<T>& x, const Tensor<T>& w, const Conv3dOptions& opt = {}) {
  const conv::Geometry g = conv::make_geometry(x.shape(), w.shape(), opt);
  Tensor<T> y = Tensor<T>::empty({g.batch, g.out_ch, g.out[0], g.out[1], g.out[2]});
  conv::forward(g, x.data().data(), w.data().data(), y.mutable_data().data());
  if (detail::should_record(x, w))
    detail::attach<T>(y, "conv3d", {x, w}, [x, w, opt](const Tensor<T>& gy, const Node<T>& n) {
      return std::vector{n.needs_grad(0) ? conv3d_input_grad(gy, w, x.shape(), opt) : Tensor<T>(),
                         n.needs_grad(1) ? conv3d_weight_grad(x, gy, w.shape(), opt) : Tensor<T>()};
    });
  return y;
}

/// Gradient of conv3d w.r.t. its input, as an op (linear in gy and w).
template <typename T>
Tensor<T> conv3d_input_grad(const Tensor<T>& gy, const Tensor<T>& w, const Shape& x_shape, const Conv3dOptions& opt) {
  const conv::Geometry g = conv::make_geometry(x_shape, w.shape(), opt);
  Tensor<T> gx = Tensor<T>::empty(x_shape);
  conv::input_grad(g, gy.data().data(), w.data().data(), gx.mutable_data().data());
  if (detail::should_record(gy, w))
    detail::attach<T>(gx, "conv3d_input_grad", {gy, w}, [gy, w, opt](const Tensor<T>& gg, const Node<T>& n) {
      return std::vector{n.needs_grad(0) ? conv3d_nobias(gg, w, opt) : Tensor<T>(),
                         n.needs_grad(1) ? conv3d_weight_grad(gg, gy, w.shape(), opt) : Tensor<T>()};
    });
  return gx;
}

/// Gradient of conv3d w.r.t. its weight, as an op (linear in x and gy).
template <typename T>
Tensor<T> conv3d_weight_grad(const Tensor<T>& x, const Tensor<T>& gy, const Shape& w_shape, const Conv3dOptions& opt) {
  const conv::Geometry g = conv::make_geometry(x.shape(), w_shape, opt);
  Tensor<T> gw = Tensor<T>::empty(w_shape);
  conv::weight_grad(g, x.data().data(), gy.data().data(), gw.mutable_data().data());
  if (detail::should_record(x, gy))
    detail::attach<T>(gw, "conv3d_weight_grad", {x, gy}, [x, gy, opt](const Tensor<T>& gg, const Node<T>& n) {
      return std::vector{n.needs_grad(0) ? conv3d_input_grad(gy, gg, x.shape(), opt) : Tensor<T>(),
                         n.needs_grad(1) ? conv3d_nobias(x, gg, opt) : Tensor<T>()};
    });
  return gw;
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, const Conv3dOptions& opt = {}) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != w.dim(0)))
    throw ShapeError("conv3d: bias " + to_string(bias.shape()) + " for weight " + to_string(w.shape()));
  Tensor<T> y = conv3d_nobias(x, w, opt);
  return bias.defined() ? add_channel(y, bias) : y;
}

}  // namespace mdcsrn
