#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "dispdiff/ops.hpp"
#include "dispdiff/rng.hpp"
#include "dispdiff/schedule.hpp"
#include "dispdiff/tensor.hpp"

// DDPM machinery over per-point displacement fields: forward noising,
// eps/v-parameterized reverse step, hybrid loss, ancestral sampling.

namespace dispdiff {

// x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps
inline Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& s) {
  s.check_t(t, 0);
  if (!same_shape(x0, eps))
    throw ShapeError("q_sample: shape mismatch " + shape_str(x0.shape) + " vs " + shape_str(eps.shape));
  double a = s.sqrt_alpha_bar(t);
  double b = s.sqrt_one_minus_alpha_bar(t);
  Tensor out = Tensor::zeros(x0.shape);
  for (std::size_t i = 0; i < out.data->size(); ++i)
    (*out.data)[i] = a * (*x0.data)[i] + b * (*eps.data)[i];
  return out;
}

// Mean of the true posterior q(x_{t-1} | x_t, x_0).
inline Tensor posterior_mean(const Tensor& x0, const Tensor& xt, int t, const NoiseSchedule& s) {
  s.check_t(t, 1);
  std::size_t i = static_cast<std::size_t>(t);
  double denom = 1.0 - s.alpha_bar[i];
  double c0 = std::sqrt(s.alpha_bar[i - 1]) * s.beta[i] / denom;
  double ct = std::sqrt(s.alpha[i]) * (1.0 - s.alpha_bar[i - 1]) / denom;
  Tensor out = Tensor::zeros(x0.shape);
  for (std::size_t k = 0; k < out.data->size(); ++k)
    (*out.data)[k] = c0 * (*x0.data)[k] + ct * (*xt.data)[k];
  return out;
}

// mu_theta = (x_t - beta_t / sqrt(1-abar_t) * eps_theta) / sqrt(alpha_t)
inline Tensor predicted_mean(const Tensor& xt, const Tensor& eps_theta, int t, const NoiseSchedule& s) {
  s.check_t(t, 1);
  std::size_t i = static_cast<std::size_t>(t);
  double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha[i]);
  double coef = s.beta[i] / s.sqrt_one_minus_alpha_bar(t);
  Tensor out = Tensor::zeros(xt.shape);
  for (std::size_t k = 0; k < out.data->size(); ++k)
    (*out.data)[k] = inv_sqrt_alpha * ((*xt.data)[k] - coef * (*eps_theta.data)[k]);
  return out;
}

// log Sigma_theta = v * log beta_t + (1-v) * log beta_tilde_t, componentwise.
// v must already be squashed to [0,1]. t=1 uses the clipped posterior value
// (beta_tilde_1 is exactly zero).
inline Tensor predicted_log_variance(const Tensor& v, int t, const NoiseSchedule& s) {
  s.check_t(t, 1);
  std::size_t i = static_cast<std::size_t>(t);
  double lo = s.log_posterior_clipped[i];
  double hi = s.log_beta[i];
  Tensor out = Tensor::zeros(v.shape);
  for (std::size_t k = 0; k < out.data->size(); ++k)
    (*out.data)[k] = (*v.data)[k] * hi + (1.0 - (*v.data)[k]) * lo;
  return out;
}

// One ancestral step x_t -> x_{t-1}. No noise is injected at the final step.
inline Tensor reverse_step(const Tensor& xt, int t, const Tensor& eps_theta, const Tensor& v_theta,
                           const NoiseSchedule& s, const Tensor& noise) {
  s.check_t(t, 1);
  if (!same_shape(xt, eps_theta) || !same_shape(xt, v_theta))
    throw ShapeError("reverse_step: shape mismatch " + shape_str(xt.shape) + " vs " +
                     shape_str(eps_theta.shape));
  Tensor mu = predicted_mean(xt, eps_theta, t, s);
  if (t == 1) return mu;
  if (!same_shape(xt, noise))
    throw ShapeError("reverse_step: noise shape mismatch " + shape_str(xt.shape) + " vs " +
                     shape_str(noise.shape));
  Tensor logvar = predicted_log_variance(v_theta, t, s);
  Tensor out = Tensor::zeros(xt.shape);
  for (std::size_t k = 0; k < out.data->size(); ++k)
    (*out.data)[k] = (*mu.data)[k] + std::exp(0.5 * (*logvar.data)[k]) * (*noise.data)[k];
  return out;
}

inline constexpr double kDefaultVlbWeight = 1e-3;

// L = mean |eps - eps_theta|^2 + lambda * L_vlb(t). The VLB term is the KL
// between the true posterior and p_theta (mean over components, nats) with
// the mean channel detached, so only v_theta trains through it; at t=1 it is
// the Gaussian NLL of x0 under p_theta. detach_mean=false keeps the mean
// channel differentiable, which gradient-verification tests rely on.
inline Tensor hybrid_loss(Tape* tape, const Tensor& eps_theta, const Tensor& v_theta, const Tensor& x0,
                          const Tensor& xt, int t, const Tensor& eps, const NoiseSchedule& s,
                          double lambda = kDefaultVlbWeight, bool detach_mean = true) {
  s.check_t(t, 1);
  if (!same_shape(eps_theta, eps) || !same_shape(x0, xt) || !same_shape(eps_theta, v_theta) ||
      !same_shape(x0, eps_theta))
    throw ShapeError("hybrid_loss: shape mismatch across inputs, eps_theta " +
                     shape_str(eps_theta.shape) + " x0 " + shape_str(x0.shape));

  Tensor simple = ops::mean(tape, ops::square(tape, ops::sub(tape, eps_theta, eps)));
  if (lambda == 0.0) return simple;

  std::size_t i = static_cast<std::size_t>(t);
  double log_lo = s.log_posterior_clipped[i];
  double log_hi = s.log_beta[i];

  // log Sigma as a function of v only: lo + v (hi - lo)
  Tensor log_sigma = ops::add_scalar(tape, ops::scale(tape, v_theta, log_hi - log_lo), log_lo);
  Tensor inv_sigma = ops::exp(tape, ops::neg(tape, log_sigma));

  Tensor eps_for_mean = detach_mean ? ops::detach(eps_theta) : eps_theta;
  double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha[i]);
  double coef = s.beta[i] / s.sqrt_one_minus_alpha_bar(t);
  Tensor mu_theta = ops::scale(tape, ops::sub(tape, xt, ops::scale(tape, eps_for_mean, coef)),
                               inv_sqrt_alpha);

  Tensor vlb;
  if (t >= 2) {
    Tensor mu_tilde = posterior_mean(x0, xt, t, s);
    double var_tilde = s.posterior_var[i];
    double log_var_tilde = std::log(var_tilde);
    // KL = 0.5 (logS - log bt + (bt + (mu~ - mu)^2) / S - 1)
    Tensor num = ops::add_scalar(tape, ops::square(tape, ops::sub(tape, mu_tilde, mu_theta)),
                                 var_tilde);
    Tensor inner = ops::add_scalar(
        tape, ops::add(tape, ops::add_scalar(tape, log_sigma, -log_var_tilde),
                       ops::mul(tape, num, inv_sigma)),
        -1.0);
    vlb = ops::scale(tape, ops::mean(tape, inner), 0.5);
  } else {
    // Gaussian negative log-likelihood of x0 under N(mu_theta, Sigma)
    Tensor sq = ops::square(tape, ops::sub(tape, x0, mu_theta));
    Tensor inner = ops::add_scalar(tape, ops::add(tape, log_sigma, ops::mul(tape, sq, inv_sigma)),
                                   std::log(2.0 * kPi));
    vlb = ops::scale(tape, ops::mean(tape, inner), 0.5);
  }
  return ops::add(tape, simple, ops::scale(tape, vlb, lambda));
}

// Denoiser interface for sampling: (x_t, t) -> (eps_theta, v_theta).
using DenoiseFn = std::function<std::pair<Tensor, Tensor>(const Tensor&, int)>;

// Ancestral sampling: x_T ~ N(0, I), then exactly T reverse steps.
inline Tensor ancestral_sample(const DenoiseFn& model, const std::vector<int>& shape,
                               const NoiseSchedule& s, Rng& rng) {
  Tensor x = Tensor::zeros(shape);
  rng.fill_normal(*x.data);
  Tensor zero_noise = Tensor::zeros(shape);
  for (int t = s.T; t >= 1; --t) {
    auto [eps_theta, v_theta] = model(x, t);
    Tensor noise = zero_noise;
    if (t > 1) {
      noise = Tensor::zeros(shape);
      rng.fill_normal(*noise.data);
    }
    x = reverse_step(x, t, eps_theta, v_theta, s, noise);
  }
  return x;
}

}  // namespace dispdiff
