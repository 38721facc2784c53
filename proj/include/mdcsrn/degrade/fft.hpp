#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "mdcsrn/degrade/volume.hpp"

namespace mdcsrn {

using cplx = std::complex<double>;

/// Complex 3-D spectrum in unshifted DFT order (DC at index 0 on every axis).
struct Spectrum {
  Index3 shape{0, 0, 0};
  std::vector<cplx> data;

  Spectrum() = default;
  explicit Spectrum(Index3 s) : shape(s), data(static_cast<std::size_t>(voxels(s))) {}
  std::int64_t numel() const { return voxels(shape); }
  cplx& at(std::int64_t a, std::int64_t b, std::int64_t c) {
    return data[static_cast<std::size_t>((a * shape[1] + b) * shape[2] + c)];
  }
  const cplx& at(std::int64_t a, std::int64_t b, std::int64_t c) const {
    return data[static_cast<std::size_t>((a * shape[1] + b) * shape[2] + c)];
  }
};

namespace fft {

// FFTW planning is not thread safe; execution of an existing plan on new
// arrays is. Plans are made once per (shape, direction) under a lock.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(const Index3& shape, int sign) {
    std::lock_guard<std::mutex> lock(mu_);
    const auto key = std::make_tuple(shape[0], shape[1], shape[2], sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    const std::size_t n = static_cast<std::size_t>(voxels(shape));
    fftw_complex* in = fftw_alloc_complex(n);
    fftw_complex* out = fftw_alloc_complex(n);
    fftw_plan p = fftw_plan_dft_3d(static_cast<int>(shape[0]), static_cast<int>(shape[1]), static_cast<int>(shape[2]),
                                   in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    if (!p) throw NumericalIntegrityError("fft: could not create a plan for " + to_string(shape));
    plans_.emplace(key, p);
    return p;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [k, p] : plans_) fftw_destroy_plan(p);
  }
  std::mutex mu_;
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t, int>, fftw_plan> plans_;
};

inline void execute(const Index3& shape, int sign, const std::vector<cplx>& in, std::vector<cplx>& out) {
  fftw_plan p = PlanCache::instance().get(shape, sign);
  // fftw_execute_dft never writes its input for out-of-place plans
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

}  // namespace fft

/// Unnormalized forward DFT.
template <typename T>
Spectrum fft3(const Volume<T>& v) {
  for (int a = 0; a < 3; ++a)
    if (v.shape[a] < 1) throw ShapeError("fft3: every dimension must be at least 1, got " + to_string(v.shape));
  std::vector<cplx> in(v.data.size());
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = cplx(static_cast<double>(v.data[i]), 0.0);
  Spectrum s(v.shape);
  fft::execute(v.shape, FFTW_FORWARD, in, s.data);
  return s;
}

/// Inverse DFT with 1/N normalization, complex result.
inline Spectrum ifft3_complex(const Spectrum& s) {
  Spectrum out(s.shape);
  fft::execute(s.shape, FFTW_BACKWARD, s.data, out.data);
  const double inv = 1.0 / static_cast<double>(s.numel());
  for (auto& z : out.data) z *= inv;
  return out;
}

/// Inverse DFT of a spectrum that must describe a real image. The imaginary
/// residue is checked against the largest magnitude before it is dropped.
template <typename T = double>
Volume<T> ifft3(const Spectrum& s, double tol = 1e-9) {
  Spectrum z = ifft3_complex(s);
  double peak = 0, resid = 0;
  for (const auto& c : z.data) {
    peak = std::max(peak, std::abs(c));
    resid = std::max(resid, std::abs(c.imag()));
  }
  if (resid > tol * peak)
    throw NumericalIntegrityError("ifft3: imaginary residue " + std::to_string(resid / peak) +
                                  " (relative) on a result expected to be real");
  Volume<T> v(s.shape);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<T>(z.data[i].real());
  return v;
}

}  // namespace mdcsrn
