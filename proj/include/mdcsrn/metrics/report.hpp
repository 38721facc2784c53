#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "mdcsrn/metrics/metrics.hpp"

namespace mdcsrn {

struct Aggregate {
  double mean = 0;
  double stddev = 0;  // population convention
  std::size_t n = 0;

  std::string format(int decimals) const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f±%.*f", decimals, mean, decimals, stddev);
    return buf;
  }
};

inline Aggregate aggregate(const std::vector<double>& xs) {
  Aggregate a;
  a.n = xs.size();
  if (xs.empty()) return a;
  for (double x : xs) a.mean += x;
  a.mean /= static_cast<double>(xs.size());
  double v = 0;
  for (double x : xs) v += (x - a.mean) * (x - a.mean);
  a.stddev = std::sqrt(v / static_cast<double>(xs.size()));
  return a;
}

struct SubjectScore {
  std::string subject;
  double psnr = 0, ssim = 0, nrmse = 0;
};

struct EvalReport {
  std::vector<SubjectScore> subjects;
  std::int64_t param_count = 0;
  double inference_seconds = 0;

  Aggregate psnr() const { return collect(&SubjectScore::psnr); }
  Aggregate ssim() const { return collect(&SubjectScore::ssim); }
  Aggregate nrmse() const { return collect(&SubjectScore::nrmse); }

 private:
  Aggregate collect(double SubjectScore::*field) const {
    std::vector<double> xs;
    for (const auto& s : subjects) xs.push_back(s.*field);
    return aggregate(xs);
  }
};

template <typename T>
SubjectScore score_subject(const std::string& id, const Volume<T>& sr, const Volume<T>& hr,
                           const MetricOptions& opt = {}) {
  return {id, psnr_slicewise(sr, hr, opt), ssim_slicewise(sr, hr, opt), nrmse(sr, hr, opt)};
}

}  // namespace mdcsrn
