#pragma once

#include <cstdint>
#include <vector>

#include "dispdiff/dataset.hpp"
#include "dispdiff/diffusion.hpp"
#include "dispdiff/model.hpp"
#include "dispdiff/rng.hpp"
#include "dispdiff/schedule.hpp"
#include "dispdiff/tensor.hpp"

// Goal prediction pipeline: frame the clouds for the variant, run the reverse
// diffusion (or a single regression pass), and map the result back to the
// world frame.

namespace dispdiff {

struct Predictor {
  ModelWeights weights;
  NoiseSchedule schedule;

  Variant variant() const { return weights.config.variant; }

  // One world-frame goal-cloud sample for the given scene clouds. The action
  // cloud is used at whatever resolution the caller provides; downsampling
  // the anchor is the caller's choice.
  Tensor predict(const Tensor& action_world, const Tensor& anchor_world, Rng& rng) const {
    Variant v = variant();
    VariantFrames frames = compute_variant_frames(v, action_world, anchor_world);
    Tensor action_in = translate_cloud(action_world, -frames.action_center);
    Tensor anchor_in = translate_cloud(anchor_world, -frames.goal_center);

    Tensor raw;
    if (is_regression(v)) {
      Tensor zeros = Tensor::zeros(action_in.shape);
      raw = forward(nullptr, weights, zeros, action_in, anchor_in, 0).eps;
    } else {
      DenoiseFn denoise = [&](const Tensor& xt, int t) {
        ModelOutputs out = forward(nullptr, weights, xt, action_in, anchor_in, t);
        return std::make_pair(out.eps, out.v);
      };
      raw = ancestral_sample(denoise, action_in.shape, schedule, rng);
    }
    return world_prediction(v, action_world, frames, raw);
  }

  // n samples under independent sub-seeds; sample i is reproducible on its own.
  std::vector<Tensor> predict_many(const Tensor& action_world, const Tensor& anchor_world, int n,
                                   std::uint64_t seed) const {
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
      out.push_back(predict(action_world, anchor_world, rng));
    }
    return out;
  }
};

}  // namespace dispdiff
