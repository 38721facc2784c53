#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "mdcsrn/tensor/gemm.hpp"
#include "mdcsrn/tensor/tensor.hpp"

namespace mdcsrn {

namespace detail {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

// [B, C, rest...] viewed as (B, C, S)
struct ChannelView {
  std::int64_t batch, channels, spatial;
};

template <typename T>
ChannelView channel_view(const Tensor<T>& x, const char* op) {
  if (x.rank() < 2) throw ShapeError(std::string(op) + ": expected [B, C, ...], got " + to_string(x.shape()));
  return {x.dim(0), x.dim(1), x.numel() / (x.dim(0) * x.dim(1))};
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F f) {
  Tensor<T> out = Tensor<T>::empty(x.shape());
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename T, typename F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, F f) {
  Tensor<T> out = Tensor<T>::empty(a.shape());
  auto pa = a.data();
  auto pb = b.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < pa.size(); ++i) dst[i] = f(pa[i], pb[i]);
  return out;
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out = detail::zip(a, b, [](T x, T y) { return x + y; });
  if (detail::should_record(a, b))
    detail::attach<T>(out, "add", {a, b}, [](const Tensor<T>& g, const Node<T>&) { return std::vector{g, g}; });
  return out;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<T> out = detail::zip(a, b, [](T x, T y) { return x - y; });
  if (detail::should_record(a, b))
    detail::attach<T>(out, "sub", {a, b}, [](const Tensor<T>& g, const Node<T>& n) {
      return std::vector{g, n.needs_grad(1) ? mul_scalar(g, T(-1)) : Tensor<T>()};
    });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out = detail::zip(a, b, [](T x, T y) { return x * y; });
  if (detail::should_record(a, b))
    detail::attach<T>(out, "mul", {a, b}, [a, b](const Tensor<T>& g, const Node<T>& n) {
      return std::vector{n.needs_grad(0) ? mul(g, b) : Tensor<T>(), n.needs_grad(1) ? mul(g, a) : Tensor<T>()};
    });
  return out;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  Tensor<T> out = detail::map(x, [c](T v) { return v * c; });
  if (detail::should_record(x))
    detail::attach<T>(out, "mul_scalar", {x},
                      [c](const Tensor<T>& g, const Node<T>&) { return std::vector{mul_scalar(g, c)}; });
  return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  Tensor<T> out = detail::map(x, [c](T v) { return v + c; });
  if (detail::should_record(x))
    detail::attach<T>(out, "add_scalar", {x}, [](const Tensor<T>& g, const Node<T>&) { return std::vector{g}; });
  return out;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return mul_scalar(x, T(-1));
}

template <typename T>
Tensor<T> pow_scalar(const Tensor<T>& x, T p) {
  Tensor<T> out = detail::map(x, [p](T v) { return std::pow(v, p); });
  if (detail::should_record(x))
    detail::attach<T>(out, "pow_scalar", {x}, [x, p](const Tensor<T>& g, const Node<T>&) {
      return std::vector{mul(g, mul_scalar(pow_scalar(x, p - T(1)), p))};
    });
  return out;
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return mul(x, x);
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  Tensor<T> out = detail::map(x, [](T v) { return std::abs(v); });
  if (detail::should_record(x))
    detail::attach<T>(out, "abs", {x}, [x](const Tensor<T>& g, const Node<T>&) {
      Tensor<T> sign = detail::map(x, [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
      return std::vector{mul(g, sign)};
    });
  return out;
}

/// Square root whose derivative is taken as 0 at 0 instead of infinity, so a
/// vanishing norm gives a zero gradient rather than inf * 0. First-order only.
template <typename T>
Tensor<T> safe_sqrt(const Tensor<T>& x) {
  Tensor<T> out = detail::map(x, [](T v) {
    if (v < T(0)) throw NumericalIntegrityError("safe_sqrt: negative argument");
    return std::sqrt(v);
  });
  if (detail::should_record(x)) {
    // a detached copy: capturing out itself would make its node own it
    Tensor<T> root = out.detach();
    detail::attach<T>(
        out, "safe_sqrt", {x},
        [root](const Tensor<T>& g, const Node<T>&) {
          Tensor<T> d = detail::map(root, [](T r) { return r > T(0) ? T(0.5) / r : T(0); });
          return std::vector{mul(g, d)};
        },
        /*higher_order=*/false);
  }
  return out;
}

// ---- reductions and broadcasts --------------------------------------------

template <typename T>
Tensor<T> expand_scalar(const Tensor<T>& s, const Shape& shape);

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  double acc = 0;
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
  if (detail::should_record(x))
    detail::attach<T>(out, "sum_all", {x}, [shape = x.shape()](const Tensor<T>& g, const Node<T>&) {
      return std::vector{expand_scalar(g, shape)};
    });
  return out;
}

template <typename T>
Tensor<T> expand_scalar(const Tensor<T>& s, const Shape& shape) {
  if (s.numel() != 1) throw ShapeError("expand_scalar: source must hold one element");
  Tensor<T> out = Tensor<T>::full(shape, s[0]);
  if (detail::should_record(s))
    detail::attach<T>(out, "expand_scalar", {s}, [sshape = s.shape()](const Tensor<T>& g, const Node<T>&) {
      Tensor<T> r = sum_all(g);
      if (sshape != r.shape()) r = reshape(r, sshape);
      return std::vector{r};
    });
  return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return mul_scalar(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape) + " changes element count");
  Tensor<T> out = Tensor<T>::from(shape, x.vec());
  if (detail::should_record(x))
    detail::attach<T>(out, "reshape", {x}, [from = x.shape()](const Tensor<T>& g, const Node<T>&) {
      return std::vector{reshape(g, from)};
    });
  return out;
}

template <typename T>
Tensor<T> expand_per_sample(const Tensor<T>& v, const Shape& shape);

/// [B, ...] -> [B]
template <typename T>
Tensor<T> sum_per_sample(const Tensor<T>& x) {
  const std::int64_t b = x.dim(0), n = x.numel() / b;
  Tensor<T> out = Tensor<T>::empty({b});
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::int64_t i = 0; i < b; ++i) {
    double acc = 0;
    for (std::int64_t j = 0; j < n; ++j) acc += src[i * n + j];
    dst[i] = static_cast<T>(acc);
  }
  if (detail::should_record(x))
    detail::attach<T>(out, "sum_per_sample", {x}, [shape = x.shape()](const Tensor<T>& g, const Node<T>&) {
      return std::vector{expand_per_sample(g, shape)};
    });
  return out;
}

/// [B] -> shape (B leading), each sample filled with its value
template <typename T>
Tensor<T> expand_per_sample(const Tensor<T>& v, const Shape& shape) {
  if (v.rank() != 1 || shape.empty() || v.dim(0) != shape[0])
    throw ShapeError("expand_per_sample: " + to_string(v.shape()) + " onto " + to_string(shape));
  Tensor<T> out = Tensor<T>::empty(shape);
  const std::int64_t b = shape[0], n = out.numel() / b;
  auto dst = out.mutable_data();
  for (std::int64_t i = 0; i < b; ++i) std::fill_n(dst.begin() + i * n, n, v[i]);
  if (detail::should_record(v))
    detail::attach<T>(out, "expand_per_sample", {v},
                      [](const Tensor<T>& g, const Node<T>&) { return std::vector{sum_per_sample(g)}; });
  return out;
}

template <typename T>
Tensor<T> mul_per_sample(const Tensor<T>& x, const Tensor<T>& v) {
  if (v.rank() != 1 || v.dim(0) != x.dim(0)) throw ShapeError("mul_per_sample: batch mismatch");
  Tensor<T> out = Tensor<T>::empty(x.shape());
  const std::int64_t b = x.dim(0), n = x.numel() / b;
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < n; ++j) dst[i * n + j] = src[i * n + j] * v[i];
  if (detail::should_record(x, v))
    detail::attach<T>(out, "mul_per_sample", {x, v}, [x, v](const Tensor<T>& g, const Node<T>& nd) {
      return std::vector{nd.needs_grad(0) ? mul_per_sample(g, v) : Tensor<T>(),
                         nd.needs_grad(1) ? sum_per_sample(mul(g, x)) : Tensor<T>()};
    });
  return out;
}

template <typename T>
Tensor<T> add_per_sample(const Tensor<T>& x, const Tensor<T>& v) {
  if (v.rank() != 1 || v.dim(0) != x.dim(0)) throw ShapeError("add_per_sample: batch mismatch");
  Tensor<T> out = Tensor<T>::empty(x.shape());
  const std::int64_t b = x.dim(0), n = x.numel() / b;
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < n; ++j) dst[i * n + j] = src[i * n + j] + v[i];
  if (detail::should_record(x, v))
    detail::attach<T>(out, "add_per_sample", {x, v}, [](const Tensor<T>& g, const Node<T>& nd) {
      return std::vector{g, nd.needs_grad(1) ? sum_per_sample(g) : Tensor<T>()};
    });
  return out;
}

template <typename T>
Tensor<T> expand_channel(const Tensor<T>& v, const Shape& shape);

/// [B, C, ...] -> [C]
template <typename T>
Tensor<T> sum_to_channel(const Tensor<T>& x) {
  const auto cv = detail::channel_view(x, "sum_to_channel");
  std::vector<double> acc(static_cast<std::size_t>(cv.channels), 0.0);
  auto src = x.data();
  for (std::int64_t b = 0; b < cv.batch; ++b)
    for (std::int64_t c = 0; c < cv.channels; ++c) {
      const T* p = src.data() + (b * cv.channels + c) * cv.spatial;
      double s = 0;
      for (std::int64_t i = 0; i < cv.spatial; ++i) s += p[i];
      acc[c] += s;
    }
  Tensor<T> out = Tensor<T>::empty({cv.channels});
  for (std::int64_t c = 0; c < cv.channels; ++c) out.mutable_data()[c] = static_cast<T>(acc[c]);
  if (detail::should_record(x))
    detail::attach<T>(out, "sum_to_channel", {x}, [shape = x.shape()](const Tensor<T>& g, const Node<T>&) {
      return std::vector{expand_channel(g, shape)};
    });
  return out;
}

template <typename T>
Tensor<T> expand_channel(const Tensor<T>& v, const Shape& shape) {
  if (v.rank() != 1 || shape.size() < 2 || shape[1] != v.dim(0))
    throw ShapeError("expand_channel: " + to_string(v.shape()) + " onto " + to_string(shape));
  Tensor<T> out = Tensor<T>::empty(shape);
  const auto cv = detail::channel_view(out, "expand_channel");
  auto dst = out.mutable_data();
  for (std::int64_t b = 0; b < cv.batch; ++b)
    for (std::int64_t c = 0; c < cv.channels; ++c)
      std::fill_n(dst.begin() + (b * cv.channels + c) * cv.spatial, cv.spatial, v[c]);
  if (detail::should_record(v))
    detail::attach<T>(out, "expand_channel", {v},
                      [](const Tensor<T>& g, const Node<T>&) { return std::vector{sum_to_channel(g)}; });
  return out;
}

template <typename T>
Tensor<T> add_channel(const Tensor<T>& x, const Tensor<T>& bias) {
  const auto cv = detail::channel_view(x, "add_channel");
  if (bias.rank() != 1 || bias.dim(0) != cv.channels)
    throw ShapeError("add_channel: bias " + to_string(bias.shape()) + " for input " + to_string(x.shape()));
  Tensor<T> out = Tensor<T>::empty(x.shape());
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::int64_t b = 0; b < cv.batch; ++b)
    for (std::int64_t c = 0; c < cv.channels; ++c) {
      const std::int64_t off = (b * cv.channels + c) * cv.spatial;
      const T v = bias[c];
      for (std::int64_t i = 0; i < cv.spatial; ++i) dst[off + i] = src[off + i] + v;
    }
  if (detail::should_record(x, bias))
    detail::attach<T>(out, "add_channel", {x, bias}, [](const Tensor<T>& g, const Node<T>& n) {
      return std::vector{g, n.needs_grad(1) ? sum_to_channel(g) : Tensor<T>()};
    });
  return out;
}

template <typename T>
Tensor<T> mul_channel(const Tensor<T>& x, const Tensor<T>& scale) {
  const auto cv = detail::channel_view(x, "mul_channel");
  if (scale.rank() != 1 || scale.dim(0) != cv.channels)
    throw ShapeError("mul_channel: scale " + to_string(scale.shape()) + " for input " + to_string(x.shape()));
  Tensor<T> out = Tensor<T>::empty(x.shape());
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::int64_t b = 0; b < cv.batch; ++b)
    for (std::int64_t c = 0; c < cv.channels; ++c) {
      const std::int64_t off = (b * cv.channels + c) * cv.spatial;
      const T v = scale[c];
      for (std::int64_t i = 0; i < cv.spatial; ++i) dst[off + i] = src[off + i] * v;
    }
  if (detail::should_record(x, scale))
    detail::attach<T>(out, "mul_channel", {x, scale}, [x, scale](const Tensor<T>& g, const Node<T>& n) {
      return std::vector{n.needs_grad(0) ? mul_channel(g, scale) : Tensor<T>(),
                         n.needs_grad(1) ? sum_to_channel(mul(g, x)) : Tensor<T>()};
    });
  return out;
}

// ---- channel concatenation --------------------------------------------------

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t start, std::int64_t count);

template <typename T>
Tensor<T> embed_channels(const Tensor<T>& x, std::int64_t start, std::int64_t total);

/// Concatenates along dim 1. All inputs must agree on every other dim.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input list");
  if (xs.size() == 1) return xs.front();
  const Shape& ref = xs.front().shape();
  if (ref.size() < 2) throw ShapeError("concat_channels: inputs need a channel dim");
  std::int64_t total = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    bool ok = s.size() == ref.size() && s[0] == ref[0];
    for (std::size_t d = 2; ok && d < s.size(); ++d) ok = s[d] == ref[d];
    if (!ok) throw ShapeError("concat_channels: " + to_string(s) + " incompatible with " + to_string(ref));
    total += s[1];
  }
  Shape out_shape = ref;
  out_shape[1] = total;
  Tensor<T> out = Tensor<T>::empty(out_shape);
  const std::int64_t batch = ref[0];
  const std::int64_t spatial = numel(ref) / (ref[0] * ref[1]);
  auto dst = out.mutable_data();
  for (std::int64_t b = 0; b < batch; ++b) {
    std::int64_t c0 = 0;
    for (const auto& t : xs) {
      const std::int64_t n = t.dim(1) * spatial;
      std::memcpy(dst.data() + (b * total + c0) * spatial, t.data().data() + b * n, sizeof(T) * n);
      c0 += t.dim(1);
    }
  }
  if (detail::should_record_list(xs)) {
    std::vector<std::int64_t> widths;
    for (const auto& t : xs) widths.push_back(t.dim(1));
    detail::attach<T>(out, "concat_channels", xs, [widths](const Tensor<T>& g, const Node<T>& n) {
      std::vector<Tensor<T>> grads(widths.size());
      std::int64_t c0 = 0;
      for (std::size_t i = 0; i < widths.size(); ++i) {
        if (n.needs_grad(i)) grads[i] = slice_channels(g, c0, widths[i]);
        c0 += widths[i];
      }
      return grads;
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t start, std::int64_t count) {
  const auto cv = detail::channel_view(x, "slice_channels");
  if (start < 0 || count <= 0 || start + count > cv.channels) throw ShapeError("slice_channels: range out of bounds");
  Shape s = x.shape();
  s[1] = count;
  Tensor<T> out = Tensor<T>::empty(s);
  for (std::int64_t b = 0; b < cv.batch; ++b)
    std::memcpy(out.mutable_data().data() + b * count * cv.spatial,
                x.data().data() + (b * cv.channels + start) * cv.spatial, sizeof(T) * count * cv.spatial);
  if (detail::should_record(x))
    detail::attach<T>(out, "slice_channels", {x}, [start, total = cv.channels](const Tensor<T>& g, const Node<T>&) {
      return std::vector{embed_channels(g, start, total)};
    });
  return out;
}

/// Places x at channel offset start of a zero tensor with total channels.
template <typename T>
Tensor<T> embed_channels(const Tensor<T>& x, std::int64_t start, std::int64_t total) {
  const auto cv = detail::channel_view(x, "embed_channels");
  Shape s = x.shape();
  s[1] = total;
  Tensor<T> out = Tensor<T>::zeros(s);
  for (std::int64_t b = 0; b < cv.batch; ++b)
    std::memcpy(out.mutable_data().data() + (b * total + start) * cv.spatial,
                x.data().data() + b * cv.channels * cv.spatial, sizeof(T) * cv.channels * cv.spatial);
  if (detail::should_record(x))
    detail::attach<T>(out, "embed_channels", {x}, [start, count = cv.channels](const Tensor<T>& g, const Node<T>&) {
      return std::vector{slice_channels(g, start, count)};
    });
  return out;
}

// ---- dense algebra ----------------------------------------------------------

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("transpose2d: expected a matrix");
  const std::int64_t r = x.dim(0), c = x.dim(1);
  Tensor<T> out = Tensor<T>::empty({c, r});
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  if (detail::should_record(x))
    detail::attach<T>(out, "transpose2d", {x},
                      [](const Tensor<T>& g, const Node<T>&) { return std::vector{transpose2d(g)}; });
  return out;
}

/// [M, K] x [K, N] -> [M, N]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const int m = static_cast<int>(a.dim(0)), k = static_cast<int>(a.dim(1)), n = static_cast<int>(b.dim(1));
  Tensor<T> out = Tensor<T>::empty({a.dim(0), b.dim(1)});
  blas::gemm(false, false, m, n, k, T(1), a.data().data(), k, b.data().data(), n, T(0), out.mutable_data().data(), n);
  if (detail::should_record(a, b))
    detail::attach<T>(out, "matmul", {a, b}, [a, b](const Tensor<T>& g, const Node<T>& nd) {
      return std::vector{nd.needs_grad(0) ? matmul(g, transpose2d(b)) : Tensor<T>(),
                         nd.needs_grad(1) ? matmul(transpose2d(a), g) : Tensor<T>()};
    });
  return out;
}

/// x [B, F], weight [O, F], bias [O] -> [B, O]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  Tensor<T> y = matmul(x, transpose2d(weight));
  return bias.defined() ? add_channel(y, bias) : y;
}

// ---- losses -----------------------------------------------------------------

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require_same_shape(pred, target, "l1_loss");
  return mean_all(abs(sub(pred, target)));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require_same_shape(pred, target, "mse_loss");
  return mean_all(square(sub(pred, target)));
}

namespace detail {

template <typename T>
Tensor<T> accumulate(const Tensor<T>& acc, const Tensor<T>& g) {
  return add(acc, g);
}

}  // namespace detail

template <typename T>
bool all_finite(const Tensor<T>& x) {
  for (T v : x.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace mdcsrn
