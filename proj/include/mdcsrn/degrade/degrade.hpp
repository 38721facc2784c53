#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "mdcsrn/degrade/fft.hpp"

namespace mdcsrn {

enum class Interp { kLinear };

struct DegradeSpec {
  /// Applied to the two phase-encoded axes of the volume.
  std::int64_t phase_factor = 2;
  /// Applied to the remaining (frequency-encoded) axis.
  std::int64_t readout_factor = 1;
  /// When set, overrides the role-based factors axis by axis (D, H, W).
  std::optional<Index3> axis_factors;
  Interp interp = Interp::kLinear;

  template <typename T>
  Index3 factors_for(const Volume<T>& v) const {
    Index3 f = axis_factors ? *axis_factors : Index3{};
    if (!axis_factors)
      for (int a = 0; a < 3; ++a) f[a] = v.phase_axes[a] ? phase_factor : readout_factor;
    for (int a = 0; a < 3; ++a)
      if (f[a] < 1) throw ConfigError("degrade: truncation factors must be positive integers");
    return f;
  }
};

namespace kspace {

// Source bins contributing to one retained bin along an axis.
struct Tap {
  std::int64_t src;
  double weight;
};

// Retained bins along one axis, indexed by destination. Interior bins map
// one-to-one. With an even retained length the lone Nyquist bin is the mean
// of the two source bins at +-M/2; keeping just one of them would break
// Hermitian symmetry and the inverse would no longer be real.
inline std::vector<std::vector<Tap>> axis_taps(std::int64_t n, std::int64_t m) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(m));
  if (m == n) {
    for (std::int64_t k = 0; k < n; ++k) taps[k] = {{k, 1.0}};
    return taps;
  }
  const std::int64_t half = (m - 1) / 2;
  for (std::int64_t k = -half; k <= half; ++k) {
    const std::int64_t dst = (k + m) % m, src = (k + n) % n;
    taps[dst] = {{src, 1.0}};
  }
  if (m % 2 == 0) taps[m / 2] = {{m / 2, 0.5}, {n - m / 2, 0.5}};
  return taps;
}

}  // namespace kspace

/// Keeps the centred low-frequency block of n / factor bins per axis.
inline Spectrum kspace_truncate(const Spectrum& s, const Index3& factors) {
  Index3 m{};
  for (int a = 0; a < 3; ++a) {
    if (factors[a] < 1) throw ConfigError("kspace_truncate: factors must be positive integers");
    if (factors[a] > s.shape[a])
      throw ConfigError("kspace_truncate: factor " + std::to_string(factors[a]) + " exceeds axis length " +
                        std::to_string(s.shape[a]));
    if (s.shape[a] % factors[a] != 0)
      throw ShapeError("kspace_truncate: axis length " + std::to_string(s.shape[a]) + " is not divisible by " +
                       std::to_string(factors[a]));
    m[a] = s.shape[a] / factors[a];
  }
  const auto t0 = kspace::axis_taps(s.shape[0], m[0]);
  const auto t1 = kspace::axis_taps(s.shape[1], m[1]);
  const auto t2 = kspace::axis_taps(s.shape[2], m[2]);
  Spectrum out(m);
  for (std::int64_t i = 0; i < m[0]; ++i)
    for (std::int64_t j = 0; j < m[1]; ++j)
      for (std::int64_t k = 0; k < m[2]; ++k) {
        const auto &a = t0[i], &b = t1[j], &c = t2[k];
        if (a.size() == 1 && b.size() == 1 && c.size() == 1) {
          out.at(i, j, k) = s.at(a[0].src, b[0].src, c[0].src);
          continue;
        }
        cplx acc = 0;
        for (const auto& x : a)
          for (const auto& y : b)
            for (const auto& z : c) acc += (x.weight * y.weight * z.weight) * s.at(x.src, y.src, z.src);
        out.at(i, j, k) = acc;
      }
  return out;
}

/// Separable linear interpolation with the corner samples aligned. Spacing is
/// rescaled so the field of view (count * spacing) is unchanged.
template <typename T>
Volume<T> resize_linear3(const Volume<T>& v, const Index3& target) {
  for (int a = 0; a < 3; ++a)
    if (target[a] < 1) throw ShapeError("resize_linear3: target dimensions must be at least 1");
  if (target == v.shape) return v;

  // 1-D sample positions per axis: lower index and fractional weight
  auto axis = [](std::int64_t ns, std::int64_t nt) {
    std::vector<std::pair<std::int64_t, double>> pos(static_cast<std::size_t>(nt));
    for (std::int64_t i = 0; i < nt; ++i) {
      const double x = nt == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(ns - 1) / static_cast<double>(nt - 1);
      std::int64_t lo = std::min<std::int64_t>(static_cast<std::int64_t>(x), ns - 1);
      double fr = x - static_cast<double>(lo);
      if (lo == ns - 1) fr = 0.0;
      pos[i] = {lo, fr};
    }
    return pos;
  };

  // three 1-D passes, each over the full grid in double
  std::vector<double> cur(v.data.begin(), v.data.end());
  Index3 shp = v.shape;
  for (int a = 0; a < 3; ++a) {
    if (shp[a] == target[a]) continue;
    const auto pos = axis(shp[a], target[a]);
    Index3 nshp = shp;
    nshp[a] = target[a];
    std::int64_t outer = 1, inner = 1;
    for (int b = 0; b < a; ++b) outer *= shp[b];
    for (int b = a + 1; b < 3; ++b) inner *= shp[b];
    std::vector<double> next(static_cast<std::size_t>(voxels(nshp)));
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t t = 0; t < target[a]; ++t) {
        const auto [lo, fr] = pos[t];
        const std::int64_t hi = std::min(lo + 1, shp[a] - 1);
        const double* p0 = cur.data() + (o * shp[a] + lo) * inner;
        const double* p1 = cur.data() + (o * shp[a] + hi) * inner;
        double* q = next.data() + (o * target[a] + t) * inner;
        if (fr == 0.0)
          std::copy(p0, p0 + inner, q);
        else
          for (std::int64_t i = 0; i < inner; ++i) q[i] = (1.0 - fr) * p0[i] + fr * p1[i];
      }
    cur.swap(next);
    shp = nshp;
  }

  Volume<T> out = v.template like<T>(target);
  for (int a = 0; a < 3; ++a)
    out.spacing[a] = v.spacing[a] * static_cast<double>(v.shape[a]) / static_cast<double>(target[a]);
  for (std::size_t i = 0; i < cur.size(); ++i) out.data[i] = static_cast<T>(cur[i]);
  return out;
}

/// Spectrum scale that makes the inverse transform on the cropped grid keep
/// constants unchanged.
inline double truncation_scale(const Index3& original, const Index3& retained) {
  return static_cast<double>(voxels(retained)) / static_cast<double>(voxels(original));
}

/// Low-resolution counterpart of v on the same matrix: FFT, keep the central
/// k-space block, inverse FFT on the smaller grid, interpolate back up.
/// Axes not divisible by their factor lose their trailing n % factor voxels
/// before the transform.
template <typename T>
Volume<T> degrade(const Volume<T>& v, const DegradeSpec& spec = {}) {
  v.validate();
  const Index3 f = spec.factors_for(v);
  Index3 usable{};
  for (int a = 0; a < 3; ++a) {
    if (f[a] > v.shape[a])
      throw ConfigError("degrade: factor " + std::to_string(f[a]) + " exceeds axis length " + std::to_string(v.shape[a]));
    usable[a] = v.shape[a] - v.shape[a] % f[a];
  }
  const Volume<T> src = usable == v.shape ? v : crop(v, {0, 0, 0}, usable);

  Spectrum k = kspace_truncate(fft3(src), f);
  const double scale = truncation_scale(usable, k.shape);
  for (auto& z : k.data) z *= scale;
  Volume<double> lr = ifft3<double>(k);

  Volume<double> up = resize_linear3(lr, v.shape);
  Volume<T> out = v.template like<T>(v.shape);
  for (std::size_t i = 0; i < up.data.size(); ++i) out.data[i] = static_cast<T>(up.data[i]);
  return out;
}

}  // namespace mdcsrn
