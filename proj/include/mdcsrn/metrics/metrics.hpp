#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mdcsrn/degrade/volume.hpp"

namespace mdcsrn {

enum class NrmseNorm { kRange, kMean, kEuclidean };

struct MetricOptions {
  /// Overrides the reference volume's max - min.
  std::optional<double> data_range;
  /// Slice plane as two axis indices; defaults to the reference's phase axes.
  std::optional<std::array<int, 2>> plane;
  NrmseNorm nrmse_norm = NrmseNorm::kRange;
  double psnr_cap = 100.0;
  /// Receives notes about skipped slices or shrunken windows.
  std::vector<std::string>* warnings = nullptr;
};

namespace metrics {

struct Slices {
  int axis;                   // slicing axis
  std::int64_t count, rows, cols;
  std::array<int, 2> plane;
};

template <typename T>
Slices slicing(const Volume<T>& ref, const MetricOptions& opt) {
  std::array<int, 2> p{};
  if (opt.plane) {
    p = *opt.plane;
    if (p[0] == p[1] || p[0] < 0 || p[0] > 2 || p[1] < 0 || p[1] > 2)
      throw ConfigError("metrics: plane must name two distinct axes out of 0, 1, 2");
  } else {
    int k = 0;
    for (int a = 0; a < 3; ++a)
      if (ref.phase_axes[a] && k < 2) p[k++] = a;
    if (k != 2) throw ConfigError("metrics: reference volume must tag exactly two phase-encoded axes");
  }
  if (p[0] > p[1]) std::swap(p[0], p[1]);
  const int s = 3 - p[0] - p[1];
  return {s, ref.shape[s], ref.shape[p[0]], ref.shape[p[1]], p};
}

// slice i of v as a row-major rows x cols array
template <typename T>
std::vector<double> slice(const Volume<T>& v, const Slices& sl, std::int64_t i) {
  std::vector<double> out(static_cast<std::size_t>(sl.rows * sl.cols));
  Index3 idx{};
  idx[sl.axis] = i;
  for (std::int64_t r = 0; r < sl.rows; ++r)
    for (std::int64_t c = 0; c < sl.cols; ++c) {
      idx[sl.plane[0]] = r;
      idx[sl.plane[1]] = c;
      out[r * sl.cols + c] = static_cast<double>(v.at(idx[0], idx[1], idx[2]));
    }
  return out;
}

template <typename T>
void require_same_shape(const Volume<T>& a, const Volume<T>& b, const char* what) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(what) + ": shapes differ, " + to_string(a.shape) + " vs " + to_string(b.shape));
}

template <typename T>
double data_range(const Volume<T>& ref, const MetricOptions& opt) {
  if (opt.data_range) {
    if (!(*opt.data_range > 0)) throw ConfigError("metrics: data range must be positive");
    return *opt.data_range;
  }
  const auto [lo, hi] = std::minmax_element(ref.data.begin(), ref.data.end());
  const double r = static_cast<double>(*hi) - static_cast<double>(*lo);
  if (!(r > 0)) throw ConfigError("metrics: reference has zero intensity range; pass an explicit data range");
  return r;
}

inline double psnr_from_mse(double mse, double range, double cap) {
  if (mse <= 0) return cap;
  return std::min(cap, 10.0 * std::log10(range * range / mse));
}

inline void warn(const MetricOptions& opt, std::string msg) {
  if (opt.warnings) opt.warnings->push_back(std::move(msg));
}

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  double s = 0;
  for (int i = 0; i < size; ++i) {
    const double x = i - (size - 1) / 2.0;
    w[i] = std::exp(-x * x / (2 * sigma * sigma));
    s += w[i];
  }
  for (auto& v : w) v /= s;
  return w;
}

// valid-mode separable filter of a rows x cols image
inline std::vector<double> filter_valid(const std::vector<double>& img, std::int64_t rows, std::int64_t cols,
                                        const std::vector<double>& w) {
  const std::int64_t k = static_cast<std::int64_t>(w.size());
  const std::int64_t orows = rows - k + 1, ocols = cols - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(rows * ocols));
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < ocols; ++c) {
      double s = 0;
      for (std::int64_t j = 0; j < k; ++j) s += w[j] * img[r * cols + c + j];
      tmp[r * ocols + c] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(orows * ocols));
  for (std::int64_t r = 0; r < orows; ++r)
    for (std::int64_t c = 0; c < ocols; ++c) {
      double s = 0;
      for (std::int64_t j = 0; j < k; ++j) s += w[j] * tmp[(r + j) * ocols + c];
      out[r * ocols + c] = s;
    }
  return out;
}

}  // namespace metrics

/// Mean over slices (in the degraded plane) of 10 log10(R^2 / MSE_slice),
/// with R the reference's intensity range; perfect slices count as the cap.
template <typename T>
double psnr_slicewise(const Volume<T>& sr, const Volume<T>& ref, const MetricOptions& opt = {}) {
  metrics::require_same_shape(sr, ref, "psnr");
  const auto sl = metrics::slicing(ref, opt);
  const double range = metrics::data_range(ref, opt);
  double total = 0;
  for (std::int64_t i = 0; i < sl.count; ++i) {
    const auto a = metrics::slice(sr, sl, i), b = metrics::slice(ref, sl, i);
    double mse = 0;
    for (std::size_t j = 0; j < a.size(); ++j) mse += (a[j] - b[j]) * (a[j] - b[j]);
    total += metrics::psnr_from_mse(mse / static_cast<double>(a.size()), range, opt.psnr_cap);
  }
  return total / static_cast<double>(sl.count);
}

/// PSNR from the MSE over the whole volume at once.
template <typename T>
double psnr_global(const Volume<T>& sr, const Volume<T>& ref, const MetricOptions& opt = {}) {
  metrics::require_same_shape(sr, ref, "psnr");
  const double range = metrics::data_range(ref, opt);
  double mse = 0;
  for (std::size_t j = 0; j < sr.data.size(); ++j) {
    const double d = static_cast<double>(sr.data[j]) - static_cast<double>(ref.data[j]);
    mse += d * d;
  }
  return metrics::psnr_from_mse(mse / static_cast<double>(sr.data.size()), range, opt.psnr_cap);
}

/// 2-D SSIM per slice (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03,
/// valid region only), averaged over slices. Slices smaller than the window
/// use the largest odd window that fits.
template <typename T>
double ssim_slicewise(const Volume<T>& sr, const Volume<T>& ref, const MetricOptions& opt = {}) {
  metrics::require_same_shape(sr, ref, "ssim");
  const auto sl = metrics::slicing(ref, opt);
  const double range = metrics::data_range(ref, opt);
  const double c1 = (0.01 * range) * (0.01 * range), c2 = (0.03 * range) * (0.03 * range);
  std::int64_t win = 11;
  const std::int64_t fit = std::min(sl.rows, sl.cols);
  if (fit < win) {
    win = fit % 2 ? fit : fit - 1;
    metrics::warn(opt, "ssim: slices of " + std::to_string(sl.rows) + "x" + std::to_string(sl.cols) +
                           " are smaller than the 11x11 window; using " + std::to_string(win) + "x" +
                           std::to_string(win));
  }
  const auto w = metrics::gaussian_window(static_cast<int>(win), 1.5);
  double total = 0;
  for (std::int64_t i = 0; i < sl.count; ++i) {
    const auto x = metrics::slice(sr, sl, i), y = metrics::slice(ref, sl, i);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      xx[j] = x[j] * x[j];
      yy[j] = y[j] * y[j];
      xy[j] = x[j] * y[j];
    }
    const auto mx = metrics::filter_valid(x, sl.rows, sl.cols, w);
    const auto my = metrics::filter_valid(y, sl.rows, sl.cols, w);
    const auto sxx = metrics::filter_valid(xx, sl.rows, sl.cols, w);
    const auto syy = metrics::filter_valid(yy, sl.rows, sl.cols, w);
    const auto sxy = metrics::filter_valid(xy, sl.rows, sl.cols, w);
    double s = 0;
    for (std::size_t j = 0; j < mx.size(); ++j) {
      const double vx = sxx[j] - mx[j] * mx[j], vy = syy[j] - my[j] * my[j], cxy = sxy[j] - mx[j] * my[j];
      s += ((2 * mx[j] * my[j] + c1) * (2 * cxy + c2)) / ((mx[j] * mx[j] + my[j] * my[j] + c1) * (vx + vy + c2));
    }
    total += s / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(sl.count);
}

namespace metrics {

inline double nrmse_normalizer(const std::vector<double>& ref, NrmseNorm norm) {
  switch (norm) {
    case NrmseNorm::kRange: {
      const auto [lo, hi] = std::minmax_element(ref.begin(), ref.end());
      return *hi - *lo;
    }
    case NrmseNorm::kMean: {
      double s = 0;
      for (double v : ref) s += v;
      return std::abs(s / static_cast<double>(ref.size()));
    }
    case NrmseNorm::kEuclidean: {
      double s = 0;
      for (double v : ref) s += v * v;
      return std::sqrt(s / static_cast<double>(ref.size()));
    }
  }
  return 0;
}

inline double nrmse_of(const std::vector<double>& a, const std::vector<double>& b, double norm) {
  double mse = 0;
  for (std::size_t j = 0; j < a.size(); ++j) mse += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(mse / static_cast<double>(a.size())) / norm;
}

}  // namespace metrics

/// Per-slice RMSE over the reference slice's normalizer (range by default),
/// averaged over slices. Slices with a zero normalizer are skipped.
template <typename T>
double nrmse(const Volume<T>& sr, const Volume<T>& ref, const MetricOptions& opt = {}) {
  metrics::require_same_shape(sr, ref, "nrmse");
  const auto sl = metrics::slicing(ref, opt);
  double total = 0;
  std::int64_t used = 0;
  for (std::int64_t i = 0; i < sl.count; ++i) {
    const auto a = metrics::slice(sr, sl, i), b = metrics::slice(ref, sl, i);
    const double norm = metrics::nrmse_normalizer(b, opt.nrmse_norm);
    if (!(norm > 0)) continue;
    total += metrics::nrmse_of(a, b, norm);
    ++used;
  }
  if (used < sl.count)
    metrics::warn(opt, "nrmse: skipped " + std::to_string(sl.count - used) + " of " + std::to_string(sl.count) +
                           " slices with a zero normalizer");
  if (used == 0) throw NumericalIntegrityError("nrmse: every reference slice has a zero normalizer");
  return total / static_cast<double>(used);
}

template <typename T>
double nrmse_global(const Volume<T>& sr, const Volume<T>& ref, const MetricOptions& opt = {}) {
  metrics::require_same_shape(sr, ref, "nrmse");
  std::vector<double> a(sr.data.begin(), sr.data.end()), b(ref.data.begin(), ref.data.end());
  const double norm = metrics::nrmse_normalizer(b, opt.nrmse_norm);
  if (!(norm > 0)) throw NumericalIntegrityError("nrmse: reference has a zero normalizer");
  return metrics::nrmse_of(a, b, norm);
}

// ---- segmentation agreement -------------------------------------------------

struct LabelMap {
  Index3 shape{0, 0, 0};
  std::vector<std::int32_t> labels;
  std::vector<std::int32_t> vocabulary;

  void validate() const {
    if (static_cast<std::int64_t>(labels.size()) != voxels(shape)) throw ShapeError("label map: size mismatch");
    for (auto l : labels)
      if (!knows(l)) throw ConfigError("label map: label " + std::to_string(l) + " is not in the vocabulary");
  }
  bool knows(std::int32_t l) const { return std::find(vocabulary.begin(), vocabulary.end(), l) != vocabulary.end(); }
};

namespace metrics {

struct Overlap {
  std::int64_t a = 0, b = 0, both = 0;
};

inline Overlap overlap(const LabelMap& a, const LabelMap& b, std::int32_t label) {
  if (a.shape != b.shape) throw ShapeError("overlap: label maps differ in shape");
  if (a.labels.size() != b.labels.size()) throw ShapeError("overlap: label maps differ in size");
  if (!a.knows(label) || !b.knows(label))
    throw ConfigError("overlap: label " + std::to_string(label) + " is not in the vocabulary");
  Overlap o;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    const bool x = a.labels[i] == label, y = b.labels[i] == label;
    o.a += x;
    o.b += y;
    o.both += x && y;
  }
  return o;
}

}  // namespace metrics

/// 2|A and B| / (|A| + |B|); 1 when the label is absent from both.
inline double dice(const LabelMap& a, const LabelMap& b, std::int32_t label) {
  const auto o = metrics::overlap(a, b, label);
  if (o.a + o.b == 0) return 1.0;
  return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.b);
}

/// |A and B| / |A or B|; 1 when the label is absent from both.
inline double jaccard(const LabelMap& a, const LabelMap& b, std::int32_t label) {
  const auto o = metrics::overlap(a, b, label);
  const std::int64_t uni = o.a + o.b - o.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(o.both) / static_cast<double>(uni);
}

template <typename F>
double macro_average(const LabelMap& a, const LabelMap& b, const std::vector<std::int32_t>& labels, F metric) {
  if (labels.empty()) throw ConfigError("macro_average: empty label set");
  double s = 0;
  for (auto l : labels) s += metric(a, b, l);
  return s / static_cast<double>(labels.size());
}

}  // namespace mdcsrn
