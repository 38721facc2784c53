#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mdcsrn/tensor/tensor.hpp"

namespace mdcsrn {

inline std::string to_string(const Index3& s) {
  return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + ")";
}

inline std::int64_t voxels(const Index3& s) { return s[0] * s[1] * s[2]; }

/// A scalar 3-D image in D-major order. Two of the three axes are tagged as
/// phase-encoded; by default H and W.
template <typename T>
struct Volume {
  Index3 shape{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<bool, 3> phase_axes{false, true, true};
  std::vector<T> data;

  Volume() = default;
  explicit Volume(Index3 s, T fill = T(0)) : shape(s), data(static_cast<std::size_t>(voxels(s)), fill) {}

  std::int64_t numel() const { return voxels(shape); }
  std::size_t offset(std::int64_t d, std::int64_t h, std::int64_t w) const {
    return static_cast<std::size_t>((d * shape[1] + h) * shape[2] + w);
  }
  T& at(std::int64_t d, std::int64_t h, std::int64_t w) { return data[offset(d, h, w)]; }
  const T& at(std::int64_t d, std::int64_t h, std::int64_t w) const { return data[offset(d, h, w)]; }

  /// Copies geometry (spacing, axis roles) but not intensities.
  template <typename U>
  Volume<U> like(Index3 s) const {
    Volume<U> v(s);
    v.spacing = spacing;
    v.phase_axes = phase_axes;
    return v;
  }

  template <typename U>
  Volume<U> cast() const {
    Volume<U> v = like<U>(shape);
    for (std::size_t i = 0; i < data.size(); ++i) v.data[i] = static_cast<U>(data[i]);
    return v;
  }

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (shape[a] < 1) throw ShapeError("volume: every dimension must be at least 1, got " + to_string(shape));
      if (!(spacing[a] > 0) || !std::isfinite(spacing[a]))
        throw ConfigError("volume: spacing must be strictly positive on every axis");
    }
    if (phase_axes[0] + phase_axes[1] + phase_axes[2] != 2)
      throw ConfigError("volume: exactly two axes must be tagged phase-encoded");
    if (static_cast<std::int64_t>(data.size()) != numel())
      throw ShapeError("volume: intensity array has " + std::to_string(data.size()) + " values for shape " +
                       to_string(shape));
  }
};

/// [1,1,D,H,W] view for the networks.
template <typename T, typename U>
Tensor<T> to_tensor(const Volume<U>& v) {
  std::vector<T> d(v.data.begin(), v.data.end());
  return Tensor<T>::from({1, 1, v.shape[0], v.shape[1], v.shape[2]}, std::move(d));
}

template <typename T>
Volume<T> crop(const Volume<T>& v, Index3 origin, Index3 size) {
  for (int a = 0; a < 3; ++a)
    if (origin[a] < 0 || size[a] < 1 || origin[a] + size[a] > v.shape[a])
      throw ShapeError("crop: box " + to_string(origin) + "+" + to_string(size) + " outside " + to_string(v.shape));
  Volume<T> out = v.template like<T>(size);
  for (std::int64_t d = 0; d < size[0]; ++d)
    for (std::int64_t h = 0; h < size[1]; ++h)
      for (std::int64_t w = 0; w < size[2]; ++w) out.at(d, h, w) = v.at(origin[0] + d, origin[1] + h, origin[2] + w);
  return out;
}

}  // namespace mdcsrn
