#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dispdiff/env.hpp"
#include "dispdiff/tensor.hpp"

// Evaluation metrics: point-wise RMSE between index-aligned clouds plus the
// distributional coverage / precision aggregates, and success-rate counting.

namespace dispdiff {

inline double rmse(const Tensor& pred, const Tensor& gt) {
  if (!same_shape(pred, gt) || pred.ndim() != 2 || pred.shape[1] != 3)
    throw ShapeError("rmse: shape mismatch " + shape_str(pred.shape) + " vs " + shape_str(gt.shape));
  int n = pred.shape[0];
  if (n == 0) throw ShapeError("rmse: empty clouds");
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double dx = pred.at(i, 0) - gt.at(i, 0);
    double dy = pred.at(i, 1) - gt.at(i, 1);
    double dz = pred.at(i, 2) - gt.at(i, 2);
    acc += dx * dx + dy * dy + dz * dz;
  }
  return std::sqrt(acc / n);
}

// For each ground truth, the minimum RMSE over its sampled predictions;
// averaged across all demonstrations.
inline double coverage_rmse(const std::vector<Tensor>& ground_truths,
                            const std::vector<std::vector<Tensor>>& predictions_per_gt) {
  if (ground_truths.empty() || predictions_per_gt.size() != ground_truths.size())
    throw std::invalid_argument("coverage_rmse: need one prediction set per ground truth");
  double total = 0.0;
  for (std::size_t i = 0; i < ground_truths.size(); ++i) {
    const auto& preds = predictions_per_gt[i];
    if (preds.empty()) throw std::invalid_argument("coverage_rmse: empty prediction set");
    double best = rmse(preds[0], ground_truths[i]);
    for (std::size_t j = 1; j < preds.size(); ++j)
      best = std::min(best, rmse(preds[j], ground_truths[i]));
    total += best;
  }
  return total / static_cast<double>(ground_truths.size());
}

// For each prediction, the minimum RMSE to its cloth's reference set;
// averaged over that cloth's predictions, then across cloths.
inline double precision_rmse(const std::vector<std::vector<Tensor>>& references_per_cloth,
                             const std::vector<std::vector<Tensor>>& predictions_per_cloth) {
  if (references_per_cloth.empty() || predictions_per_cloth.size() != references_per_cloth.size())
    throw std::invalid_argument("precision_rmse: need one prediction set per cloth");
  double total = 0.0;
  for (std::size_t c = 0; c < references_per_cloth.size(); ++c) {
    const auto& refs = references_per_cloth[c];
    const auto& preds = predictions_per_cloth[c];
    if (refs.empty()) throw std::invalid_argument("precision_rmse: empty reference set");
    if (preds.empty()) throw std::invalid_argument("precision_rmse: empty prediction set");
    double acc = 0.0;
    for (const Tensor& p : preds) {
      double best = rmse(p, refs[0]);
      for (std::size_t r = 1; r < refs.size(); ++r) best = std::min(best, rmse(p, refs[r]));
      acc += best;
    }
    total += acc / static_cast<double>(preds.size());
  }
  return total / static_cast<double>(references_per_cloth.size());
}

inline double success_rate(const std::vector<EpisodeResult>& results) {
  if (results.empty()) throw std::invalid_argument("success_rate: empty result list");
  int ok = 0;
  for (const auto& r : results) ok += r.success ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

inline double success_rate(const std::vector<bool>& flags) {
  if (flags.empty()) throw std::invalid_argument("success_rate: empty result list");
  int ok = 0;
  for (bool f : flags) ok += f ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(flags.size());
}

// ---------------------------------------------------------------------------
// CSV report: columns (regime, variant, metric, value, n, seed)

struct MetricsRow {
  std::string regime;
  std::string variant;
  std::string metric;
  double value = 0.0;
  int n = 0;
  std::uint64_t seed = 0;
};

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "regime,variant,metric,value,n,seed\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    out << r.regime << "," << r.variant << "," << r.metric << "," << buf << "," << r.n << ","
        << r.seed << "\n";
  }
}

}  // namespace dispdiff
