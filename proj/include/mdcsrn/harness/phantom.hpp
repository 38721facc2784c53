#pragma once

#include <cmath>
#include <filesystem>
#include <random>

#include "mdcsrn/degrade/degrade.hpp"
#include "mdcsrn/harness/manifest.hpp"
#include "mdcsrn/harness/volume_io.hpp"

namespace mdcsrn {

struct PhantomOptions {
  Index3 shape{64, 64, 64};
  int smooth_terms = 8;
  int ellipsoids = 8;
  int curves = 10;
  double noise = 0.02;
  /// Minimum share of spectral energy the degradation must remove.
  double min_out_of_band = 0.05;
  DegradeSpec band{};
};

/// Share of spectral energy in bins a truncation with `spec` would discard
/// (bins at or beyond the retained half-width on any truncated axis).
template <typename T>
double out_of_band_fraction(const Volume<T>& v, const DegradeSpec& spec = {}) {
  const Index3 f = spec.factors_for(v);
  const Spectrum s = fft3(v);
  double total = 0, outside = 0;
  for (std::int64_t d = 0; d < s.shape[0]; ++d)
    for (std::int64_t h = 0; h < s.shape[1]; ++h)
      for (std::int64_t w = 0; w < s.shape[2]; ++w) {
        const double e = std::norm(s.at(d, h, w));
        total += e;
        const std::array<std::int64_t, 3> idx{d, h, w};
        bool out = false;
        for (int a = 0; a < 3; ++a) {
          if (f[a] == 1) continue;
          const std::int64_t n = s.shape[a], k = idx[a] <= n / 2 ? idx[a] : n - idx[a];
          if (2 * k * f[a] >= n) out = true;
        }
        if (out) outside += e;
      }
  return total > 0 ? outside / total : 0.0;
}

namespace phantom {

inline void add_curves(Volume<double>& v, int count, std::mt19937_64& rng) {
  const auto [D, H, W] = v.shape;
  std::uniform_real_distribution<double> u01(0, 1), amp(1.5, 3.0), rad(0.5, 0.9);
  for (int c = 0; c < count; ++c) {
    // a smooth random path: centre plus two harmonics per axis
    std::array<double, 3> centre, a1, a2, p1, p2;
    for (int a = 0; a < 3; ++a) {
      const double n = static_cast<double>(v.shape[a]);
      centre[a] = n * (0.25 + 0.5 * u01(rng));
      a1[a] = n * (0.1 + 0.25 * u01(rng));
      a2[a] = n * 0.1 * u01(rng);
      p1[a] = 2 * M_PI * u01(rng);
      p2[a] = 2 * M_PI * u01(rng);
    }
    const double brightness = amp(rng), r = rad(rng);
    const int samples = static_cast<int>(8 * (D + H + W));
    for (int i = 0; i < samples; ++i) {
      const double t = 2 * M_PI * i / samples;
      std::array<double, 3> p;
      for (int a = 0; a < 3; ++a) p[a] = centre[a] + a1[a] * std::sin(t + p1[a]) + a2[a] * std::sin(3 * t + p2[a]);
      const std::int64_t z0 = std::max<std::int64_t>(0, std::lround(p[0]) - 2), z1 = std::min(D - 1, std::lround(p[0]) + 2);
      const std::int64_t y0 = std::max<std::int64_t>(0, std::lround(p[1]) - 2), y1 = std::min(H - 1, std::lround(p[1]) + 2);
      const std::int64_t x0 = std::max<std::int64_t>(0, std::lround(p[2]) - 2), x1 = std::min(W - 1, std::lround(p[2]) + 2);
      for (std::int64_t z = z0; z <= z1; ++z)
        for (std::int64_t y = y0; y <= y1; ++y)
          for (std::int64_t x = x0; x <= x1; ++x) {
            const double dd = (z - p[0]) * (z - p[0]) + (y - p[1]) * (y - p[1]) + (x - p[2]) * (x - p[2]);
            double& cell = v.at(z, y, x);
            cell = std::max(cell, brightness * std::exp(-dd / (2 * r * r)));
          }
    }
  }
}

inline void zscore(Volume<double>& v) {
  double mean = 0;
  for (double x : v.data) mean += x;
  mean /= static_cast<double>(v.data.size());
  double var = 0;
  for (double& x : v.data) {
    x -= mean;
    var += x * x;
  }
  const double sd = std::sqrt(var / static_cast<double>(v.data.size()));
  if (!(sd > 0)) throw NumericalIntegrityError("phantom: degenerate constant volume");
  for (double& x : v.data) x /= sd;
  // second pass removes the rounding residue of the first
  double resid = 0;
  for (double x : v.data) resid += x;
  resid /= static_cast<double>(v.data.size());
  for (double& x : v.data) x -= resid;
}

}  // namespace phantom

/// Deterministic synthetic HR volume: smooth background field, ellipsoidal
/// compartments, thin bright vessel-like curves and mild noise, z-scored.
/// More curves are added until the degradation band would remove at least
/// `min_out_of_band` of the energy.
inline Volume<double> make_phantom(const PhantomOptions& opt, std::uint64_t seed) {
  for (auto n : opt.shape)
    if (n < 48) throw ConfigError("make_phantom: every dimension must be at least 48, got " + to_string(opt.shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0, 1);
  const auto [D, H, W] = opt.shape;
  Volume<double> v(opt.shape);

  for (int t = 0; t < opt.smooth_terms; ++t) {
    const double fz = 3 * u01(rng), fy = 3 * u01(rng), fx = 3 * u01(rng), ph = 2 * M_PI * u01(rng);
    const double amp = 0.3 * u01(rng);
    for (std::int64_t z = 0; z < D; ++z)
      for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t x = 0; x < W; ++x)
          v.at(z, y, x) += amp * std::cos(2 * M_PI * (fz * z / D + fy * y / H + fx * x / W) + ph);
  }

  for (int e = 0; e < opt.ellipsoids; ++e) {
    std::array<double, 3> c, r;
    for (int a = 0; a < 3; ++a) {
      const double n = static_cast<double>(opt.shape[a]);
      c[a] = n * (0.2 + 0.6 * u01(rng));
      r[a] = n * (0.06 + 0.2 * u01(rng));
    }
    const double level = 2.0 * u01(rng) - 0.5;
    for (std::int64_t z = 0; z < D; ++z)
      for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t x = 0; x < W; ++x) {
          const double q = std::pow((z - c[0]) / r[0], 2) + std::pow((y - c[1]) / r[1], 2) + std::pow((x - c[2]) / r[2], 2);
          if (q <= 1) v.at(z, y, x) += level;
        }
  }

  Volume<double> curves(opt.shape);
  phantom::add_curves(curves, opt.curves, rng);
  std::normal_distribution<double> noise(0, opt.noise);
  std::vector<double> eps(v.data.size());
  for (auto& x : eps) x = noise(rng);

  auto assemble = [&] {
    Volume<double> out = v;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += curves.data[i] + eps[i];
    phantom::zscore(out);
    return out;
  };
  Volume<double> out = assemble();
  for (int extra = 0; extra < 20 && out_of_band_fraction(out, opt.band) < opt.min_out_of_band; ++extra) {
    phantom::add_curves(curves, 4, rng);
    out = assemble();
  }
  return out;
}

struct PhantomSet {
  std::int64_t train = 32, validation = 4, evaluation = 8, test = 0;
  std::int64_t total() const { return train + validation + evaluation + test; }
};

/// Writes one HR volume per subject plus manifest.json into `dir`.
inline DatasetManifest make_phantoms(const std::string& dir, const PhantomSet& counts, const PhantomOptions& opt,
                                     std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  DatasetManifest m;
  m.note = "synthetic phantoms, seed " + std::to_string(seed) + ", shape " + to_string(opt.shape);
  m.base_dir = dir;
  std::seed_seq seq{seed};
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(counts.total()));
  {
    std::vector<std::uint32_t> raw(seeds.size() * 2);
    seq.generate(raw.begin(), raw.end());
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = (std::uint64_t{raw[2 * i]} << 32) | raw[2 * i + 1];
  }
  std::int64_t i = 0;
  auto emit = [&](Split split, std::int64_t n) {
    for (std::int64_t j = 0; j < n; ++j, ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "phantom_%03lld", static_cast<long long>(i));
      const std::string file = std::string(id) + ".mdvol";
      write_volume(dir + "/" + file, make_phantom(opt, seeds[static_cast<std::size_t>(i)]).cast<float>());
      m.subjects.push_back({id, file, split});
    }
  };
  emit(Split::kTrain, counts.train);
  emit(Split::kValidation, counts.validation);
  emit(Split::kEvaluation, counts.evaluation);
  emit(Split::kTest, counts.test);
  m.save(dir + "/manifest.json");
  return m;
}

}  // namespace mdcsrn
