#pragma once

#include <cmath>
#include <vector>

#include "mdcsrn/tensor/ops.hpp"

namespace mdcsrn {

enum class BnMode { kTrain, kEval };

/// Running statistics of one batch-norm layer.
template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  double momentum = 0.99;
  double eps = 1e-5;

  explicit BatchNormState(std::int64_t channels = 0)
      : running_mean(static_cast<std::size_t>(channels), T(0)), running_var(static_cast<std::size_t>(channels), T(1)) {}
};

/// Per-channel normalization over (B, D, H, W). Train mode uses batch
/// statistics and updates the running ones (running = m*running + (1-m)*batch,
/// unbiased variance); eval mode uses the running statistics.
template <typename T>
Tensor<T> batch_norm3d(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift, BatchNormState<T>& state,
                       BnMode mode) {
  const auto cv = detail::channel_view(x, "batch_norm3d");
  if (scale.numel() != cv.channels || shift.numel() != cv.channels)
    throw ShapeError("batch_norm3d: affine parameters must have " + std::to_string(cv.channels) + " elements");
  if (static_cast<std::int64_t>(state.running_mean.size()) != cv.channels)
    throw ShapeError("batch_norm3d: running statistics sized for a different channel count");

  const std::int64_t count = cv.batch * cv.spatial;
  std::vector<T> mean(cv.channels), invstd(cv.channels);
  auto src = x.data();
  for (std::int64_t c = 0; c < cv.channels; ++c) {
    if (mode == BnMode::kTrain) {
      // shifted by the first element so constant channels have zero spread exactly
      const double ref = src[c * cv.spatial];
      double s = 0;
      for (std::int64_t b = 0; b < cv.batch; ++b) {
        const T* p = src.data() + (b * cv.channels + c) * cv.spatial;
        for (std::int64_t i = 0; i < cv.spatial; ++i) s += p[i] - ref;
      }
      const double mu = ref + s / static_cast<double>(count);
      double ss = 0;
      for (std::int64_t b = 0; b < cv.batch; ++b) {
        const T* p = src.data() + (b * cv.channels + c) * cv.spatial;
        for (std::int64_t i = 0; i < cv.spatial; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const double var = ss / static_cast<double>(count);
      mean[c] = static_cast<T>(mu);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + state.eps));
      const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
      state.running_mean[c] = static_cast<T>(state.momentum * state.running_mean[c] + (1 - state.momentum) * mu);
      state.running_var[c] = static_cast<T>(state.momentum * state.running_var[c] + (1 - state.momentum) * unbiased);
    } else {
      mean[c] = state.running_mean[c];
      invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + state.eps));
    }
  }

  Tensor<T> xhat = Tensor<T>::empty(x.shape());
  Tensor<T> y = Tensor<T>::empty(x.shape());
  {
    auto xh = xhat.mutable_data();
    auto dst = y.mutable_data();
    for (std::int64_t b = 0; b < cv.batch; ++b)
      for (std::int64_t c = 0; c < cv.channels; ++c) {
        const std::int64_t off = (b * cv.channels + c) * cv.spatial;
        const T m = mean[c], is = invstd[c], g = scale[c], s = shift[c];
        for (std::int64_t i = 0; i < cv.spatial; ++i) {
          const T v = (src[off + i] - m) * is;
          xh[off + i] = v;
          dst[off + i] = v * g + s;
        }
      }
  }

  if (detail::should_record(x, scale, shift)) {
    detail::attach<T>(
        y, "batch_norm3d", {x, scale, shift},
        [xhat, scale, invstd, cv, mode](const Tensor<T>& g, const Node<T>& n) {
          const std::int64_t count = cv.batch * cv.spatial;
          std::vector<double> sum_g(cv.channels, 0.0), sum_gx(cv.channels, 0.0);
          auto gs = g.data();
          auto xh = xhat.data();
          for (std::int64_t b = 0; b < cv.batch; ++b)
            for (std::int64_t c = 0; c < cv.channels; ++c) {
              const std::int64_t off = (b * cv.channels + c) * cv.spatial;
              for (std::int64_t i = 0; i < cv.spatial; ++i) {
                sum_g[c] += gs[off + i];
                sum_gx[c] += gs[off + i] * xh[off + i];
              }
            }
          std::vector<Tensor<T>> out(3);
          if (n.needs_grad(0)) {
            out[0] = Tensor<T>::empty(g.shape());
            auto gx = out[0].mutable_data();
            for (std::int64_t b = 0; b < cv.batch; ++b)
              for (std::int64_t c = 0; c < cv.channels; ++c) {
                const std::int64_t off = (b * cv.channels + c) * cv.spatial;
                const double k = static_cast<double>(scale[c]) * invstd[c];
                if (mode == BnMode::kTrain) {
                  const double mg = sum_g[c] / count, mgx = sum_gx[c] / count;
                  for (std::int64_t i = 0; i < cv.spatial; ++i)
                    gx[off + i] = static_cast<T>(k * (gs[off + i] - mg - xh[off + i] * mgx));
                } else {
                  for (std::int64_t i = 0; i < cv.spatial; ++i) gx[off + i] = static_cast<T>(k * gs[off + i]);
                }
              }
          }
          if (n.needs_grad(1)) {
            out[1] = Tensor<T>::empty({cv.channels});
            for (std::int64_t c = 0; c < cv.channels; ++c) out[1].mutable_data()[c] = static_cast<T>(sum_gx[c]);
          }
          if (n.needs_grad(2)) {
            out[2] = Tensor<T>::empty({cv.channels});
            for (std::int64_t c = 0; c < cv.channels; ++c) out[2].mutable_data()[c] = static_cast<T>(sum_g[c]);
          }
          return out;
        },
        /*higher_order=*/false);
  }
  return y;
}

/// Normalizes each sample over all of its non-batch elements, then applies a
/// per-channel affine. Built from differentiable primitives, so it supports
/// double backward.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift, T eps = T(1e-5)) {
  const std::int64_t per_sample = x.numel() / x.dim(0);
  const T inv_n = T(1) / static_cast<T>(per_sample);
  // Subtracting a per-sample constant first leaves the result unchanged and
  // makes constant samples centre to exactly zero.
  Tensor<T> ref = Tensor<T>::empty({x.dim(0)});
  for (std::int64_t b = 0; b < x.dim(0); ++b) ref.mutable_data()[b] = -x[b * per_sample];
  Tensor<T> shifted = add_per_sample(x, ref);
  Tensor<T> mu = mul_scalar(sum_per_sample(shifted), inv_n);
  Tensor<T> centered = add_per_sample(shifted, neg(mu));
  Tensor<T> var = mul_scalar(sum_per_sample(square(centered)), inv_n);
  Tensor<T> inv_std = pow_scalar(add_scalar(var, eps), T(-0.5));
  Tensor<T> y = mul_per_sample(centered, inv_std);
  if (scale.defined()) y = mul_channel(y, scale);
  if (shift.defined()) y = add_channel(y, shift);
  return y;
}

}  // namespace mdcsrn
