#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace dispdiff {

// Precomputed linear noise schedule. Index convention: noised states live at
// t in {1..T}; index 0 is the clean-data sentinel (alpha_bar[0] = 1), which
// makes q_sample at t=0 the identity and posterior_var[1] exactly 0.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;           // [0..T], beta[0] = 0
  std::vector<double> alpha;          // 1 - beta
  std::vector<double> alpha_bar;      // running product of alpha
  std::vector<double> posterior_var;  // beta_tilde
  std::vector<double> log_beta;                // log beta[t], t >= 1
  std::vector<double> log_posterior_clipped;   // log beta_tilde with the t=1 entry clipped

  double sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar[static_cast<std::size_t>(t)]); }
  double sqrt_one_minus_alpha_bar(int t) const {
    return std::sqrt(1.0 - alpha_bar[static_cast<std::size_t>(t)]);
  }

  void check_t(int t, int lo) const {
    if (t < lo || t > T)
      throw std::out_of_range("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) +
                              "," + std::to_string(T) + "]");
  }
};

// Beta endpoints follow the common 1000-step defaults (1e-4, 0.02) rescaled
// by 1000/T so the total injected noise is preserved; T=100 gives
// (1e-3, 0.2) and alpha_bar_T ~ 2e-5. Explicit endpoints override.
inline NoiseSchedule make_linear_schedule(int T, double beta_start = -1.0, double beta_end = -1.0) {
  if (T < 1) throw std::invalid_argument("make_linear_schedule: T must be >= 1");
  double scale = 1000.0 / static_cast<double>(T);
  if (beta_start <= 0.0) beta_start = 1e-4 * scale;
  if (beta_end <= 0.0) beta_end = std::min(0.02 * scale, 0.999);
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
    throw std::invalid_argument("make_linear_schedule: need 0 < beta_start <= beta_end < 1");

  NoiseSchedule s;
  s.T = T;
  s.beta.assign(static_cast<std::size_t>(T) + 1, 0.0);
  s.alpha.assign(static_cast<std::size_t>(T) + 1, 1.0);
  s.alpha_bar.assign(static_cast<std::size_t>(T) + 1, 1.0);
  s.posterior_var.assign(static_cast<std::size_t>(T) + 1, 0.0);
  s.log_beta.assign(static_cast<std::size_t>(T) + 1, 0.0);
  s.log_posterior_clipped.assign(static_cast<std::size_t>(T) + 1, 0.0);

  for (int t = 1; t <= T; ++t) {
    double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
    std::size_t i = static_cast<std::size_t>(t);
    s.beta[i] = beta_start + frac * (beta_end - beta_start);
    s.alpha[i] = 1.0 - s.beta[i];
    s.alpha_bar[i] = s.alpha_bar[i - 1] * s.alpha[i];
    s.posterior_var[i] = s.beta[i] * (1.0 - s.alpha_bar[i - 1]) / (1.0 - s.alpha_bar[i]);
    s.log_beta[i] = std::log(s.beta[i]);
  }
  for (int t = 2; t <= T; ++t)
    s.log_posterior_clipped[static_cast<std::size_t>(t)] =
        std::log(s.posterior_var[static_cast<std::size_t>(t)]);
  // posterior_var[1] is exactly 0; its log is only needed by the t=1
  // likelihood term, where the next step's value stands in.
  s.log_posterior_clipped[1] = T >= 2 ? s.log_posterior_clipped[2] : s.log_beta[1];
  return s;
}

}  // namespace dispdiff
