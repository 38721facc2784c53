#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mdcsrn/tensor.hpp"

namespace mdcsrn::testing {

struct GradCheckResult {
  double max_rel_error = 0;
  double max_abs_error = 0;
  // worst relative error over entries that disagree by more than atol
  double max_rel_error_above_atol = 0;
};

// Central differences on every element of every input, against the
// reverse-mode gradient. f must rebuild its graph from the given leaves.
inline GradCheckResult grad_check(const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                                  std::vector<Tensor<double>> inputs, double step = 1e-5,
                                  double atol = 1e-9) {
  for (auto& x : inputs) x.set_requires_grad(true);
  const Tensor<double> loss = f(inputs);
  const auto analytic = autograd::grad(loss, inputs);
  GradCheckResult r;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      double fp, fm;
      {
        NoGradGuard ng;
        data[i] = orig + step;
        fp = f(inputs).item();
        data[i] = orig - step;
        fm = f(inputs).item();
      }
      data[i] = orig;
      const double numeric = (fp - fm) / (2 * step);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-6});
      r.max_abs_error = std::max(r.max_abs_error, abs_err);
      r.max_rel_error = std::max(r.max_rel_error, rel);
      if (abs_err > atol) r.max_rel_error_above_atol = std::max(r.max_rel_error_above_atol, rel);
    }
  }
  return r;
}

inline Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t = Tensor<double>::empty(std::move(shape));
  for (auto& v : t.mutable_data()) v = u(rng);
  return t;
}

}  // namespace mdcsrn::testing
