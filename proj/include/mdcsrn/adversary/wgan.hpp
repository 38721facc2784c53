#pragma once

#include <random>

#include "mdcsrn/tensor.hpp"

namespace mdcsrn {

template <typename T>
struct GanLossTerms {
  Tensor<T> d_loss;            // mean D(fake) - mean D(real) + penalty
  Tensor<T> g_adv_loss;        // -mean D(fake)
  Tensor<T> gradient_penalty;  // lambda * mean_b (|grad D(x_hat)| - 1)^2
  double em_estimate = 0;      // mean D(real) - mean D(fake)
};

namespace wgan {

template <typename T>
void require_finite(const Tensor<T>& scores, const char* what) {
  if (!all_finite(scores)) throw TrainingIntegrityError(std::string("critic produced a non-finite score on ") + what);
}

template <typename T>
double mean_value(const Tensor<T>& t) {
  double s = 0;
  for (T v : t.data()) s += v;
  return s / static_cast<double>(t.numel());
}

}  // namespace wgan

/// lambda * mean over samples of (||dD/dx_hat||_2 - 1)^2 at random points on
/// the segments between paired real and fake samples. Differentiable with
/// respect to the critic's parameters (the critic's gradient is built with
/// create_graph). One interpolation weight per sample.
template <typename T, typename Critic>
Tensor<T> gradient_penalty(const Critic& critic, const Tensor<T>& real, const Tensor<T>& fake, double lambda,
                           std::mt19937_64& rng) {
  if (real.shape() != fake.shape())
    throw ShapeError("gradient_penalty: real " + to_string(real.shape()) + " vs fake " + to_string(fake.shape()));
  if (lambda < 0) throw ConfigError("gradient_penalty: lambda must be non-negative");
  const std::int64_t b = real.dim(0), per = real.numel() / b;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<T> x_hat = Tensor<T>::empty(real.shape());
  {
    auto r = real.data(), f = fake.data();
    auto dst = x_hat.mutable_data();
    for (std::int64_t i = 0; i < b; ++i) {
      const T eps = static_cast<T>(u(rng));
      for (std::int64_t j = i * per; j < (i + 1) * per; ++j) dst[j] = eps * r[j] + (T(1) - eps) * f[j];
    }
  }
  x_hat.set_requires_grad(true);

  GradModeGuard on(true);
  Tensor<T> scores = critic(x_hat);
  wgan::require_finite(scores, "interpolated samples");
  // samples are independent, so d(sum of scores)/dx_hat holds every
  // per-sample gradient at once
  Tensor<T> g = autograd::grad(sum_all(scores), {x_hat}, /*create_graph=*/true)[0];
  Tensor<T> norm = safe_sqrt(sum_per_sample(square(g)));
  Tensor<T> dev = add_scalar(norm, T(-1));
  return mul_scalar(mean_all(square(dev)), static_cast<T>(lambda));
}

/// Critic loss, generator adversarial loss, penalty and Earth-Mover estimate
/// for one batch. Pass a detached fake when only the critic is being trained.
template <typename T, typename Critic>
GanLossTerms<T> wgan_gp_terms(const Critic& critic, const Tensor<T>& real, const Tensor<T>& fake, double lambda_gp,
                              std::mt19937_64& rng) {
  if (real.shape() != fake.shape())
    throw ShapeError("wgan_gp_terms: real " + to_string(real.shape()) + " vs fake " + to_string(fake.shape()));
  GanLossTerms<T> t;
  Tensor<T> d_real = critic(real);
  wgan::require_finite(d_real, "real samples");
  Tensor<T> d_fake = critic(fake);
  wgan::require_finite(d_fake, "fake samples");
  Tensor<T> mr = mean_all(d_real), mf = mean_all(d_fake);
  t.gradient_penalty = gradient_penalty(critic, real.detach(), fake.detach(), lambda_gp, rng);
  t.d_loss = add(sub(mf, mr), t.gradient_penalty);
  t.g_adv_loss = neg(mf);
  t.em_estimate = wgan::mean_value(d_real) - wgan::mean_value(d_fake);
  if (!std::isfinite(t.d_loss.item()) || !std::isfinite(t.em_estimate))
    throw TrainingIntegrityError("wgan_gp_terms: non-finite critic loss");
  return t;
}

/// -mean D(fake), for the generator's update.
template <typename T, typename Critic>
Tensor<T> adversarial_loss(const Critic& critic, const Tensor<T>& fake) {
  Tensor<T> d_fake = critic(fake);
  wgan::require_finite(d_fake, "fake samples");
  return neg(mean_all(d_fake));
}

/// Earth-Mover estimate mean D(real) - mean D(fake), without building a graph.
template <typename T, typename Critic>
double em_estimate(const Critic& critic, const Tensor<T>& real, const Tensor<T>& fake) {
  NoGradGuard ng;
  Tensor<T> d_real = critic(real), d_fake = critic(fake);
  wgan::require_finite(d_real, "real samples");
  wgan::require_finite(d_fake, "fake samples");
  return wgan::mean_value(d_real) - wgan::mean_value(d_fake);
}

/// Mean absolute voxel error plus lambda times the adversarial term. An
/// undefined adversarial term counts as zero.
template <typename T>
Tensor<T> composite_generator_loss(const Tensor<T>& sr, const Tensor<T>& hr, const Tensor<T>& g_adv,
                                   double lambda = 0.1) {
  Tensor<T> l1 = l1_loss(sr, hr);
  if (!g_adv.defined() || lambda == 0) return l1;
  if (g_adv.numel() != 1) throw ShapeError("composite_generator_loss: adversarial term must be a scalar");
  return add(l1, mul_scalar(reshape(g_adv, l1.shape()), static_cast<T>(lambda)));
}

}  // namespace mdcsrn
