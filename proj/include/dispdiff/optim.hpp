#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dispdiff/model.hpp"

namespace dispdiff {

// Warmup-then-cosine learning-rate schedule.
struct LrSchedule {
  double base_lr = 1e-4;
  int warmup_steps = 100;
  int total_steps = 10000;

  double at(int step) const {
    if (warmup_steps > 0 && step < warmup_steps)
      return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    if (total_steps <= warmup_steps) return base_lr;
    double progress = static_cast<double>(step - warmup_steps) /
                      static_cast<double>(total_steps - warmup_steps);
    if (progress > 1.0) progress = 1.0;
    return base_lr * 0.5 * (1.0 + std::cos(kPi * progress));
  }
};

// Adam with decoupled weight decay. Moment buffers align with the parameter
// order of the ModelWeights they were created for.
class AdamW {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;

  explicit AdamW(const ModelWeights& w, double weight_decay_ = 1e-5) : weight_decay(weight_decay_) {
    m_.reserve(w.params.size());
    v_.reserve(w.params.size());
    for (const auto& [name, t] : w.params) {
      m_.emplace_back(t.data->size(), 0.0);
      v_.emplace_back(t.data->size(), 0.0);
    }
  }

  std::int64_t step_count() const { return step_; }

  void step(ModelWeights& w, const std::vector<std::vector<double>>& grads, double lr) {
    if (grads.size() != w.params.size())
      throw std::runtime_error("AdamW: gradient count does not match parameter count");
    ++step_;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (std::size_t p = 0; p < w.params.size(); ++p) {
      auto& data = *w.params[p].second.data;
      const auto& g = grads[p];
      auto& m = m_[p];
      auto& v = v_[p];
      if (g.size() != data.size())
        throw std::runtime_error("AdamW: gradient size mismatch for " + w.params[p].first);
      for (std::size_t i = 0; i < data.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        data[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * data[i]);
      }
    }
  }

  // Checkpoint plumbing: moments plus the step counter.
  std::vector<std::vector<double>>& moments_m() { return m_; }
  std::vector<std::vector<double>>& moments_v() { return v_; }
  void set_step_count(std::int64_t s) { step_ = s; }

 private:
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t step_ = 0;
};

}  // namespace dispdiff
