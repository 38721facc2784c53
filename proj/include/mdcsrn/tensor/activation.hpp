#pragma once

#include <cmath>

#include "mdcsrn/tensor/ops.hpp"

namespace mdcsrn {

/// ELU with alpha = 1. First-order only: its backward treats the local
/// derivative as a constant, so it refuses double backward.
template <typename T>
Tensor<T> elu(const Tensor<T>& x) {
  Tensor<T> y = detail::map(x, [](T v) { return v > T(0) ? v : std::expm1(v); });
  if (detail::should_record(x))
    detail::attach<T>(
        y, "elu", {x},
        [x](const Tensor<T>& g, const Node<T>&) {
          Tensor<T> d = Tensor<T>::empty(x.shape());
          auto xs = x.data();
          auto ds = d.mutable_data();
          for (std::size_t i = 0; i < xs.size(); ++i) ds[i] = xs[i] > T(0) ? T(1) : std::exp(xs[i]);
          return std::vector{mul(g, d)};
        },
        /*higher_order=*/false);
  return y;
}

/// Leaky ReLU. Piecewise linear, so the backward mask is exact for every
/// order of differentiation.
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2)) {
  Tensor<T> y = detail::map(x, [slope](T v) { return v > T(0) ? v : slope * v; });
  if (detail::should_record(x))
    detail::attach<T>(y, "leaky_relu", {x}, [x, slope](const Tensor<T>& g, const Node<T>&) {
      Tensor<T> mask = detail::map(x, [slope](T v) { return v > T(0) ? T(1) : slope; });
      return std::vector{mul(g, mask)};
    });
  return y;
}

}  // namespace mdcsrn
