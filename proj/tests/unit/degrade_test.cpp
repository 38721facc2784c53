#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "../support/dft_oracle.hpp"
#include "mdcsrn/degrade/degrade.hpp"

using namespace mdcsrn;
using mdcsrn::testing::as_spectrum;
using mdcsrn::testing::dft3_direct;

namespace {

constexpr double kPi = std::numbers::pi;

Volume<double> random_volume(Index3 shape, std::uint64_t seed) {
  Volume<double> v(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  for (auto& x : v.data) x = n(rng);
  return v;
}

template <typename F>
Volume<double> fill(Index3 shape, F f) {
  Volume<double> v(shape);
  for (std::int64_t d = 0; d < shape[0]; ++d)
    for (std::int64_t h = 0; h < shape[1]; ++h)
      for (std::int64_t w = 0; w < shape[2]; ++w) v.at(d, h, w) = f(double(d), double(h), double(w));
  return v;
}

// circular separable Gaussian filter
Volume<double> smooth(Volume<double> v, double sigma) {
  const int r = int(3 * sigma);
  for (int a = 0; a < 3; ++a) {
    Volume<double> o = v;
    for (std::int64_t d = 0; d < v.shape[0]; ++d)
      for (std::int64_t h = 0; h < v.shape[1]; ++h)
        for (std::int64_t w = 0; w < v.shape[2]; ++w) {
          double s = 0, ws = 0;
          for (int t = -r; t <= r; ++t) {
            Index3 p{d, h, w};
            p[a] = ((p[a] + t) % v.shape[a] + v.shape[a]) % v.shape[a];
            const double k = std::exp(-t * t / (2 * sigma * sigma));
            s += k * v.at(p[0], p[1], p[2]);
            ws += k;
          }
          o.at(d, h, w) = s / ws;
        }
    v = o;
  }
  return v;
}

double energy(const std::vector<double>& x) {
  double e = 0;
  for (double v : x) e += v * v;
  return e;
}

double max_abs_diff(const Volume<double>& a, const Volume<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

double psnr(const Volume<double>& ref, const Volume<double>& x) {
  double mse = 0, lo = ref.data[0], hi = ref.data[0];
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    mse += (ref.data[i] - x.data[i]) * (ref.data[i] - x.data[i]);
    lo = std::min(lo, ref.data[i]);
    hi = std::max(hi, ref.data[i]);
  }
  mse /= double(ref.data.size());
  return 10 * std::log10((hi - lo) * (hi - lo) / mse);
}

// inverse on the cropped grid, normalized so constants survive
Volume<double> truncated_image(const Volume<double>& v, Index3 f) {
  Spectrum k = kspace_truncate(fft3(v), f);
  const double s = truncation_scale(v.shape, k.shape);
  for (auto& z : k.data) z *= s;
  return ifft3(k);
}

}  // namespace

// ---- fft3 / ifft3 ----------------------------------------------------------

TEST(Fft3, ConstantVolumeConcentratesInDc) {
  Volume<double> v({6, 4, 5}, 2.5);
  Spectrum s = fft3(v);
  const double dc = std::abs(s.data[0]);
  EXPECT_NEAR(dc, 2.5 * 120, 1e-9);
  for (std::size_t i = 1; i < s.data.size(); ++i) EXPECT_LE(std::abs(s.data[i]), 1e-10 * dc);
}

TEST(Fft3, ImpulseHasFlatMagnitude) {
  Volume<double> v({4, 6, 8});
  v.at(1, 2, 3) = 1.0;
  for (const auto& z : fft3(v).data) EXPECT_NEAR(std::abs(z), 1.0, 1e-12);
}

TEST(Fft3, MatchesDirectSummation) {
  Volume<double> v = random_volume({5, 4, 3}, 1);
  Spectrum fast = fft3(v);
  Spectrum slow = dft3_direct(as_spectrum(v), -1);
  for (std::size_t i = 0; i < fast.data.size(); ++i) EXPECT_LT(std::abs(fast.data[i] - slow.data[i]), 1e-10);
}

TEST(Fft3, Parseval) {
  Volume<double> v = random_volume({16, 16, 16}, 2);
  Spectrum s = fft3(v);
  double es = 0;
  for (const auto& z : s.data) es += std::norm(z);
  const double ex = energy(v.data);
  EXPECT_LE(std::abs(ex - es / double(v.numel())) / ex, 1e-9);
}

TEST(Fft3, AcceptsFloatVolumes) {
  Volume<float> v({2, 2, 2}, 1.0f);
  EXPECT_NEAR(fft3(v).data[0].real(), 8.0, 1e-6);
}

TEST(Ifft3, RoundTripRecoversInput) {
  Volume<double> v = random_volume({20, 16, 12}, 3);
  Volume<double> r = ifft3(fft3(v));
  double peak = 0;
  for (double x : v.data) peak = std::max(peak, std::abs(x));
  EXPECT_LE(max_abs_diff(v, r) / peak, 1e-9);
}

TEST(Ifft3, ZeroSpectrumGivesZeroVolume) {
  Volume<double> r = ifft3(Spectrum({3, 4, 5}));
  for (double x : r.data) EXPECT_EQ(x, 0.0);
}

TEST(Ifft3, HermitianSpectrumGivesRealVolume) {
  const Index3 n{6, 5, 4};
  Spectrum h(n);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0, 1);
  for (auto& z : h.data) z = {g(rng), g(rng)};
  Spectrum s(n);
  for (std::int64_t a = 0; a < n[0]; ++a)
    for (std::int64_t b = 0; b < n[1]; ++b)
      for (std::int64_t c = 0; c < n[2]; ++c)
        s.at(a, b, c) = 0.5 * (h.at(a, b, c) + std::conj(h.at((n[0] - a) % n[0], (n[1] - b) % n[1], (n[2] - c) % n[2])));
  Spectrum z = ifft3_complex(s);
  double peak = 0, resid = 0;
  for (const auto& c : z.data) {
    peak = std::max(peak, std::abs(c));
    resid = std::max(resid, std::abs(c.imag()));
  }
  EXPECT_LE(resid, 1e-10 * peak);
  EXPECT_NO_THROW(ifft3(s));
}

TEST(Ifft3, NonHermitianSpectrumIsRejected) {
  Spectrum s({4, 4, 4});
  s.at(0, 1, 0) = {1.0, 0.0};
  EXPECT_THROW(ifft3(s), NumericalIntegrityError);
  EXPECT_NO_THROW(ifft3_complex(s));
}

// ---- kspace_truncate -------------------------------------------------------

TEST(KspaceTruncate, UnitFactorsAreIdentity) {
  Spectrum s = fft3(random_volume({4, 6, 5}, 5));
  Spectrum t = kspace_truncate(s, {1, 1, 1});
  ASSERT_EQ(t.shape, s.shape);
  for (std::size_t i = 0; i < s.data.size(); ++i) EXPECT_EQ(t.data[i], s.data[i]);
}

TEST(KspaceTruncate, RetainsCentredBlockShape) {
  Spectrum t = kspace_truncate(fft3(random_volume({4, 12, 10}, 6)), {1, 2, 5});
  EXPECT_EQ(t.shape, (Index3{4, 6, 2}));
}

TEST(KspaceTruncate, InteriorCoefficientsAreBitIdentical) {
  // retained lengths 3 (odd) and 4 (even); only the even axis has a folded bin
  Spectrum s = fft3(random_volume({2, 6, 8}, 7));
  Spectrum t = kspace_truncate(s, {1, 2, 2});
  for (std::int64_t a = 0; a < 2; ++a)
    for (std::int64_t kb = -1; kb <= 1; ++kb)
      for (std::int64_t kc = -1; kc <= 1; ++kc)
        EXPECT_EQ(t.at(a, (kb + 3) % 3, (kc + 4) % 4), s.at(a, (kb + 6) % 6, (kc + 8) % 8));
}

TEST(KspaceTruncate, EvenRetainedLengthFoldsNyquistPair) {
  Spectrum s = fft3(random_volume({1, 1, 8}, 8));
  Spectrum t = kspace_truncate(s, {1, 1, 2});
  EXPECT_LT(std::abs(t.at(0, 0, 2) - 0.5 * (s.at(0, 0, 2) + s.at(0, 0, 6))), 1e-14);
}

TEST(KspaceTruncate, ConstantVolumeKeepsDcAndValue) {
  Volume<double> v({4, 8, 8}, 3.25);
  Spectrum s = fft3(v);
  Spectrum t = kspace_truncate(s, {1, 2, 2});
  EXPECT_EQ(t.data[0], s.data[0]);
  for (double x : truncated_image(v, {1, 2, 2}).data) EXPECT_NEAR(x, 3.25, 1e-9);
}

TEST(KspaceTruncate, CosineAboveCutoffVanishes) {
  // retained band on H is |k| <= 4 of 16; frequency 6 lies outside
  Volume<double> v = fill({2, 16, 8}, [](double, double h, double) { return std::cos(2 * kPi * 6 * h / 16); });
  Spectrum t = kspace_truncate(fft3(v), {1, 2, 2});
  for (const auto& z : t.data) EXPECT_LE(std::abs(z), 1e-9);
  for (double x : truncated_image(v, {1, 2, 2}).data) EXPECT_LE(std::abs(x), 1e-9);
}

TEST(KspaceTruncate, CosineInsideBandSurvivesOnCoarseGrid) {
  Volume<double> v = fill({2, 16, 8}, [](double, double h, double) { return std::cos(2 * kPi * 3 * h / 16); });
  Volume<double> lr = truncated_image(v, {1, 2, 2});
  for (std::int64_t h = 0; h < 8; ++h) EXPECT_NEAR(lr.at(1, h, 2), std::cos(2 * kPi * 3 * h / 8.0), 1e-12);
}

TEST(KspaceTruncate, CosineAtCutoffKeepsHalfAmplitude) {
  // the +-M/2 pair folds into one real bin: derived amplitude 1/2
  Volume<double> v = fill({1, 8, 16}, [](double, double, double w) { return std::cos(2 * kPi * 4 * w / 16); });
  Volume<double> lr = truncated_image(v, {1, 1, 2});
  for (std::int64_t w = 0; w < 8; ++w) EXPECT_NEAR(lr.at(0, 3, w), 0.5 * (w % 2 ? -1 : 1), 1e-12);
}

TEST(KspaceTruncate, RealInputStaysRealForOddAndEvenBands) {
  for (Index3 f : {Index3{1, 2, 2}, Index3{2, 3, 1}, Index3{1, 4, 2}}) {
    Spectrum t = kspace_truncate(fft3(random_volume({4, 12, 8}, 9)), f);
    EXPECT_NO_THROW(ifft3(t));
  }
}

TEST(KspaceTruncate, RejectsBadFactors) {
  Spectrum s = fft3(random_volume({4, 6, 5}, 10));
  EXPECT_THROW(kspace_truncate(s, {1, 7, 1}), ConfigError);
  EXPECT_THROW(kspace_truncate(s, {0, 1, 1}), ConfigError);
  EXPECT_THROW(kspace_truncate(s, {1, 4, 1}), ShapeError);
}

// ---- resize_linear3 --------------------------------------------------------

TEST(Resize, SameShapeIsIdentity) {
  Volume<double> v = random_volume({3, 5, 4}, 11);
  Volume<double> r = resize_linear3(v, v.shape);
  EXPECT_EQ(r.data, v.data);
  EXPECT_EQ(r.spacing, v.spacing);
}

TEST(Resize, LinearRampIsReproduced) {
  auto ramp = [](double d, double h, double w) { return 0.5 + 2 * d - 0.75 * h + 1.25 * w; };
  Volume<double> v = fill({5, 6, 7}, ramp);
  Volume<double> r = resize_linear3(v, {9, 11, 13});
  for (std::int64_t d = 0; d < 9; ++d)
    for (std::int64_t h = 0; h < 11; ++h)
      for (std::int64_t w = 0; w < 13; ++w)
        EXPECT_NEAR(r.at(d, h, w), ramp(d * 4.0 / 8, h * 5.0 / 10, w * 6.0 / 12), 1e-9);
}

TEST(Resize, CornersAreAligned) {
  Volume<double> v = random_volume({4, 4, 4}, 12);
  Volume<double> r = resize_linear3(v, {7, 10, 13});
  EXPECT_DOUBLE_EQ(r.at(0, 0, 0), v.at(0, 0, 0));
  EXPECT_DOUBLE_EQ(r.at(6, 9, 12), v.at(3, 3, 3));
  EXPECT_DOUBLE_EQ(r.at(6, 0, 12), v.at(3, 0, 3));
}

TEST(Resize, UpsampledValuesStayWithinNeighbourBounds) {
  Volume<double> v = random_volume({8, 8, 8}, 13);
  Volume<double> r = resize_linear3(v, {16, 16, 16});
  for (std::int64_t d = 0; d < 16; ++d)
    for (std::int64_t h = 0; h < 16; ++h)
      for (std::int64_t w = 0; w < 16; ++w) {
        const Index3 p{d, h, w};
        Index3 lo, hi;
        for (int a = 0; a < 3; ++a) {
          const double x = p[a] * 7.0 / 15;
          lo[a] = std::int64_t(std::floor(x));
          hi[a] = std::min<std::int64_t>(lo[a] + 1, 7);
        }
        double mn = 1e300, mx = -1e300;
        for (auto a : {lo[0], hi[0]})
          for (auto b : {lo[1], hi[1]})
            for (auto c : {lo[2], hi[2]}) {
              mn = std::min(mn, v.at(a, b, c));
              mx = std::max(mx, v.at(a, b, c));
            }
        EXPECT_GE(r.at(d, h, w), mn - 1e-12);
        EXPECT_LE(r.at(d, h, w), mx + 1e-12);
      }
}

TEST(Resize, SpacingKeepsFieldOfView) {
  Volume<double> v({4, 8, 8});
  v.spacing = {1.0, 0.5, 0.5};
  Volume<double> r = resize_linear3(v, {4, 16, 4});
  EXPECT_DOUBLE_EQ(r.spacing[0], 1.0);
  EXPECT_DOUBLE_EQ(r.spacing[1], 0.25);
  EXPECT_DOUBLE_EQ(r.spacing[2], 1.0);
}

TEST(Resize, SingletonTargetTakesFirstSample) {
  Volume<double> v = random_volume({3, 3, 3}, 14);
  Volume<double> r = resize_linear3(v, {1, 3, 3});
  EXPECT_DOUBLE_EQ(r.at(0, 1, 2), v.at(0, 1, 2));
}

TEST(Resize, RejectsEmptyTarget) {
  EXPECT_THROW(resize_linear3(Volume<double>({2, 2, 2}), {0, 2, 2}), ShapeError);
}

// ---- degrade ---------------------------------------------------------------

TEST(Degrade, KeepsMatrixSizeAndMetadata) {
  Volume<double> v = random_volume({6, 16, 12}, 15);
  v.spacing = {1.2, 0.7, 0.7};
  Volume<double> lr = degrade(v);
  EXPECT_EQ(lr.shape, v.shape);
  EXPECT_EQ(lr.spacing, v.spacing);
  EXPECT_EQ(lr.phase_axes, v.phase_axes);
}

TEST(Degrade, ConstantIsPreserved) {
  for (double x : degrade(Volume<double>({4, 10, 12}, -1.75)).data) EXPECT_NEAR(x, -1.75, 1e-6);
}

TEST(Degrade, IsLinear) {
  Volume<double> x = random_volume({4, 12, 12}, 16), y = random_volume({4, 12, 12}, 17);
  const double a = 1.7, b = -0.4;
  Volume<double> mix(x.shape);
  for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = a * x.data[i] + b * y.data[i];
  Volume<double> lhs = degrade(mix), dx = degrade(x), dy = degrade(y);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < lhs.data.size(); ++i) {
    const double rhs = a * dx.data[i] + b * dy.data[i];
    num += (lhs.data[i] - rhs) * (lhs.data[i] - rhs);
    den += rhs * rhs;
  }
  EXPECT_LE(std::sqrt(num / den), 1e-8);
}

TEST(Degrade, RemovesOutOfBandEnergy) {
  // H and W are phase-encoded: their high-frequency content is lost, D is not touched
  Volume<double> hi = fill({8, 16, 16}, [](double, double h, double) { return std::cos(2 * kPi * 6 * h / 16); });
  for (double x : degrade(hi).data) EXPECT_LE(std::abs(x), 1e-9);
  Volume<double> along_d = fill({16, 8, 8}, [](double d, double, double) { return std::cos(2 * kPi * 6 * d / 16); });
  Volume<double> kept = degrade(along_d);
  EXPECT_LT(max_abs_diff(kept, along_d), 1e-9);
}

TEST(Degrade, AxisRolesSelectTruncatedAxes) {
  Volume<double> v = fill({16, 8, 8}, [](double d, double, double) { return std::cos(2 * kPi * 6 * d / 16); });
  v.phase_axes = {true, true, false};
  for (double x : degrade(v).data) EXPECT_LE(std::abs(x), 1e-9);
}

TEST(Degrade, ExplicitFactorsOverrideRoles) {
  DegradeSpec spec;
  spec.axis_factors = Index3{1, 1, 1};
  Volume<double> v = random_volume({4, 6, 8}, 18);
  EXPECT_LT(max_abs_diff(degrade(v, spec), v), 1e-12);
}

TEST(Degrade, IsNearlyIdempotent) {
  // Linear interpolation attenuates content near the cutoff, so the bound is
  // only meaningful for image-like inputs; white noise deviates by ~30%.
  Volume<double> v = smooth(random_volume({16, 32, 32}, 19), 3.0);
  Volume<double> once = degrade(v);
  Volume<double> twice = degrade(once);
  double num = 0;
  for (std::size_t i = 0; i < once.data.size(); ++i) num += (twice.data[i] - once.data[i]) * (twice.data[i] - once.data[i]);
  const double rel = num / energy(once.data);
  RecordProperty("relative_energy_deviation", std::to_string(rel));
  EXPECT_LE(rel, 0.05);
}

TEST(Degrade, SmoothBlobSurvivesBetterThanCheckerboard) {
  const Index3 n{16, 32, 32};
  Volume<double> blob = fill(n, [](double d, double h, double w) {
    return std::exp(-((d - 7.5) * (d - 7.5) + (h - 15.5) * (h - 15.5) + (w - 15.5) * (w - 15.5)) / (2 * 25.0));
  });
  Volume<double> check = fill(n, [](double d, double h, double w) {
    return (std::int64_t(d + h + w) % 2) ? 1.0 : 0.0;
  });
  EXPECT_GT(psnr(blob, degrade(blob)), psnr(check, degrade(check)) + 10);
}

TEST(Degrade, OddAxesAreCroppedBeforeTransform) {
  Volume<double> v = random_volume({5, 15, 13}, 20);
  Volume<double> lr = degrade(v);
  EXPECT_EQ(lr.shape, v.shape);
  for (double x : lr.data) EXPECT_TRUE(std::isfinite(x));
  for (double x : degrade(Volume<double>({5, 15, 13}, 0.5)).data) EXPECT_NEAR(x, 0.5, 1e-9);
}

TEST(Degrade, FloatVolumesAgreeWithDouble) {
  Volume<double> v = random_volume({4, 16, 16}, 21);
  Volume<float> lf = degrade(v.cast<float>());
  Volume<double> ld = degrade(v);
  for (std::size_t i = 0; i < ld.data.size(); ++i) EXPECT_NEAR(lf.data[i], ld.data[i], 1e-5);
}

TEST(Degrade, RejectsInvalidVolumes) {
  Volume<double> v({4, 4, 4});
  v.spacing[1] = 0;
  EXPECT_THROW(degrade(v), ConfigError);
  Volume<double> w({4, 4, 4});
  w.phase_axes = {true, true, true};
  EXPECT_THROW(degrade(w), ConfigError);
  Volume<double> tiny({4, 1, 4});
  EXPECT_THROW(degrade(tiny), ConfigError);
}
