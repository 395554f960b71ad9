#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dispdiff/ops.hpp"
#include "dispdiff/rng.hpp"
#include "dispdiff/tensor.hpp"

// Goal-prediction transformer: per-point MLP encoders feed DiT-style blocks
// that mix self-attention over action features with cross-attention to
// anchor features, all modulated by the timestep through adaLN. Every
// ablation and baseline is a variant switch on the same machinery.

namespace dispdiff {

enum class Variant { CD, CP, SD, SP, CD_W, CP_W, CD_NAC, CP_NAC, RD, RP };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::CD: return "CD";
    case Variant::CP: return "CP";
    case Variant::SD: return "SD";
    case Variant::SP: return "SP";
    case Variant::CD_W: return "CD-W";
    case Variant::CP_W: return "CP-W";
    case Variant::CD_NAC: return "CD-NAC";
    case Variant::CP_NAC: return "CP-NAC";
    case Variant::RD: return "RD";
    case Variant::RP: return "RP";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::CD, Variant::CP, Variant::SD, Variant::SP, Variant::CD_W, Variant::CP_W,
                    Variant::CD_NAC, Variant::CP_NAC, Variant::RD, Variant::RP})
    if (s == variant_name(v)) return v;
  throw std::invalid_argument("unknown variant: " + s);
}

// The diffused / predicted quantity is absolute goal positions rather than
// displacements.
inline bool predicts_points(Variant v) {
  return v == Variant::CP || v == Variant::SP || v == Variant::CP_W || v == Variant::CP_NAC ||
         v == Variant::RP;
}

// Action and anchor merged into one scene cloud; blocks are self-attention only.
inline bool merges_scene(Variant v) { return v == Variant::SD || v == Variant::SP; }

// Per-point action-context features concatenated with the diffused features.
inline bool uses_action_context(Variant v) {
  return !(v == Variant::CD_NAC || v == Variant::CP_NAC) && !merges_scene(v);
}

// Inputs mean-centered in object-specific frames (scene frame for SD/SP).
inline bool uses_world_frame(Variant v) { return v == Variant::CD_W || v == Variant::CP_W; }

// Deterministic single-shot prediction, no timestep conditioning.
inline bool is_regression(Variant v) { return v == Variant::RD || v == Variant::RP; }

struct ModelConfig {
  Variant variant = Variant::CD;
  int depth = 5;
  int num_heads = 4;
  int hidden_size = 128;
  int encoder_hidden = 64;
  int time_freq_dim = 128;

  void validate() const {
    if (depth < 1) throw std::invalid_argument("ModelConfig: depth must be >= 1");
    if (num_heads < 1 || hidden_size % num_heads != 0)
      throw std::invalid_argument("ModelConfig: hidden_size must be divisible by num_heads");
    if (time_freq_dim % 2 != 0) throw std::invalid_argument("ModelConfig: time_freq_dim must be even");
  }

  // Width of the token stream through the blocks: context features
  // concatenated with diffused-quantity features, or the latter alone.
  int token_width() const {
    return (uses_action_context(variant) || merges_scene(variant)) ? 2 * hidden_size : hidden_size;
  }
  bool has_cross_attention() const { return !merges_scene(variant); }
  int sublayers_per_block() const { return has_cross_attention() ? 3 : 2; }
  int out_channels() const { return is_regression(variant) ? 3 : 6; }
};

// ---------------------------------------------------------------------------
// parameters

struct ModelWeights {
  ModelConfig config;
  std::vector<std::pair<std::string, Tensor>> params;
  std::unordered_map<std::string, int> index;

  Tensor& at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw std::runtime_error("ModelWeights: no parameter " + name);
    return params[static_cast<std::size_t>(it->second)].second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw std::runtime_error("ModelWeights: no parameter " + name);
    return params[static_cast<std::size_t>(it->second)].second;
  }

  void add(const std::string& name, std::vector<int> shape) {
    index.emplace(name, static_cast<int>(params.size()));
    params.emplace_back(name, Tensor::zeros(std::move(shape)));
  }

  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
  }
};

namespace detail {

inline void add_linear(ModelWeights& w, const std::string& prefix, int in, int out) {
  w.add(prefix + ".w", {in, out});
  w.add(prefix + ".b", {out});
}

inline void add_encoder(ModelWeights& w, const std::string& prefix, int in, int mid, int out) {
  add_linear(w, prefix + ".l1", in, mid);
  add_linear(w, prefix + ".l2", mid, out);
}

inline void add_attention(ModelWeights& w, const std::string& prefix, int q_in, int kv_in, int width) {
  add_linear(w, prefix + ".q", q_in, width);
  add_linear(w, prefix + ".k", kv_in, width);
  add_linear(w, prefix + ".v", kv_in, width);
  add_linear(w, prefix + ".o", width, width);
}

inline bool is_zero_init(const std::string& name) {
  // adaLN modulation and the output head start at zero: every block is the
  // identity at initialization and the initial prediction is zero.
  return name.find(".adaln.") != std::string::npos || name.rfind("head.out.", 0) == 0;
}

}  // namespace detail

inline ModelWeights build_weights(const ModelConfig& cfg) {
  cfg.validate();
  ModelWeights w;
  w.config = cfg;
  int h = cfg.hidden_size;
  int d = cfg.token_width();

  detail::add_encoder(w, "enc_disp", 3, cfg.encoder_hidden, h);
  if (uses_action_context(cfg.variant) || merges_scene(cfg.variant))
    detail::add_encoder(w, "enc_ctx", 3, cfg.encoder_hidden, h);
  if (cfg.has_cross_attention()) detail::add_encoder(w, "enc_anchor", 3, cfg.encoder_hidden, h);
  if (!is_regression(cfg.variant)) {
    detail::add_linear(w, "t_mlp.l1", cfg.time_freq_dim, h);
    detail::add_linear(w, "t_mlp.l2", h, h);
  }
  for (int i = 0; i < cfg.depth; ++i) {
    std::string p = "block" + std::to_string(i);
    detail::add_attention(w, p + ".self", d, d, d);
    if (cfg.has_cross_attention()) detail::add_attention(w, p + ".cross", d, h, d);
    detail::add_linear(w, p + ".mlp.l1", d, 4 * d);
    detail::add_linear(w, p + ".mlp.l2", 4 * d, d);
    detail::add_linear(w, p + ".adaln", h, 3 * cfg.sublayers_per_block() * d);
  }
  detail::add_linear(w, "head.adaln", h, 2 * d);
  detail::add_linear(w, "head.out", d, cfg.out_channels());
  return w;
}

// Xavier-uniform weights, zero biases; adaLN modulations and the output head
// zero-initialized.
inline void init_weights(ModelWeights& w, Rng& rng) {
  for (auto& [name, t] : w.params) {
    if (detail::is_zero_init(name) || t.ndim() == 1) {
      for (double& v : *t.data) v = 0.0;
      continue;
    }
    double bound = std::sqrt(6.0 / (t.shape[0] + t.shape[1]));
    for (double& v : *t.data) v = rng.uniform(-bound, bound);
  }
}

// Test helper: every parameter (gates and head included) drawn from
// N(0, scale) so forward paths are non-trivial.
inline void randomize_all_weights(ModelWeights& w, Rng& rng, double scale = 0.05) {
  for (auto& [name, t] : w.params)
    for (double& v : *t.data) v = rng.normal() * scale;
}

// ---------------------------------------------------------------------------
// forward pieces

namespace nn {

inline Tensor linear(Tape* tp, const ModelWeights& w, const std::string& prefix, const Tensor& x) {
  return ops::add_rowvec(tp, ops::matmul(tp, x, w.at(prefix + ".w")), w.at(prefix + ".b"));
}

inline Tensor encode_points(Tape* tp, const ModelWeights& w, const std::string& prefix,
                            const Tensor& pts) {
  Tensor h = ops::silu(tp, linear(tp, w, prefix + ".l1", pts));
  return linear(tp, w, prefix + ".l2", h);
}

// x * (1 + scale) + shift, with scale/shift broadcast over rows
inline Tensor modulate(Tape* tp, const Tensor& x, const Tensor& shift, const Tensor& scale) {
  return ops::add_rowvec(tp, ops::mul_rowvec(tp, x, ops::add_scalar(tp, scale, 1.0)), shift);
}

inline Tensor multihead_attention(Tape* tp, const ModelWeights& w, const std::string& prefix,
                                  const Tensor& q_src, const Tensor& kv_src, int num_heads) {
  Tensor q = linear(tp, w, prefix + ".q", q_src);
  Tensor k = linear(tp, w, prefix + ".k", kv_src);
  Tensor v = linear(tp, w, prefix + ".v", kv_src);
  int width = q.shape[1];
  int dh = width / num_heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out;
  for (int hidx = 0; hidx < num_heads; ++hidx) {
    Tensor qh = ops::slice_cols(tp, q, hidx * dh, dh);
    Tensor kh = ops::slice_cols(tp, k, hidx * dh, dh);
    Tensor vh = ops::slice_cols(tp, v, hidx * dh, dh);
    Tensor scores = ops::scale(tp, ops::matmul(tp, qh, ops::transpose(tp, kh)), inv_sqrt);
    Tensor probs = ops::softmax(tp, scores);
    Tensor oh = ops::matmul(tp, probs, vh);
    out = hidx == 0 ? oh : ops::concat_cols(tp, out, oh);
  }
  return linear(tp, w, prefix + ".o", out);
}

inline Tensor mlp(Tape* tp, const ModelWeights& w, const std::string& prefix, const Tensor& x) {
  return linear(tp, w, prefix + ".l2", ops::silu(tp, linear(tp, w, prefix + ".l1", x)));
}

}  // namespace nn

// Sinusoidal embedding of the timestep followed by the two-layer MLP;
// regression variants use a constant zero embedding (adaLN then reduces to a
// learned constant modulation).
inline Tensor timestep_embedding(Tape* tp, const ModelWeights& w, int t) {
  const ModelConfig& cfg = w.config;
  if (is_regression(cfg.variant)) return Tensor::zeros({1, cfg.hidden_size});
  int half = cfg.time_freq_dim / 2;
  Tensor freq = Tensor::zeros({1, cfg.time_freq_dim});
  for (int i = 0; i < half; ++i) {
    double f = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    (*freq.data)[std::size_t(i)] = std::cos(t * f);
    (*freq.data)[std::size_t(half + i)] = std::sin(t * f);
  }
  Tensor h = ops::silu(tp, nn::linear(tp, w, "t_mlp.l1", freq));
  return nn::linear(tp, w, "t_mlp.l2", h);
}

struct EncodedScene {
  Tensor tokens;         // per-point feature stream entering the blocks
  Tensor anchor_tokens;  // anchor features for cross-attention (empty for SD/SP)
  int num_action = 0;    // rows of `tokens` that correspond to action points
};

// Per-point features. Action context and displacement features are
// concatenated per point; NAC variants keep displacement features only; SD/SP
// build one merged scene stream (anchor rows carry zero displacement
// features) and the anchor stream stays empty.
inline EncodedScene encode(Tape* tp, const ModelWeights& w, const Tensor& noised, const Tensor& action,
                           const Tensor& anchor) {
  const ModelConfig& cfg = w.config;
  if (noised.ndim() != 2 || noised.shape[1] != 3)
    throw ShapeError("encode: noised field must be N x 3, got " + shape_str(noised.shape));
  if (uses_action_context(cfg.variant) && !same_shape(noised, action))
    throw ShapeError("encode: shape mismatch " + shape_str(noised.shape) + " vs " +
                     shape_str(action.shape));

  EncodedScene out;
  out.num_action = noised.shape[0];
  Tensor f_dx = nn::encode_points(tp, w, "enc_disp", noised);

  if (merges_scene(cfg.variant)) {
    Tensor scene = ops::concat_rows(tp, action, anchor);
    Tensor f_scene = nn::encode_points(tp, w, "enc_ctx", scene);
    Tensor f_dx_padded = ops::concat_rows(tp, f_dx, Tensor::zeros({anchor.shape[0], cfg.hidden_size}));
    out.tokens = ops::concat_cols(tp, f_scene, f_dx_padded);
    return out;
  }

  if (uses_action_context(cfg.variant)) {
    Tensor f_a = nn::encode_points(tp, w, "enc_ctx", action);
    out.tokens = ops::concat_cols(tp, f_a, f_dx);
  } else {
    out.tokens = f_dx;
  }
  out.anchor_tokens = nn::encode_points(tp, w, "enc_anchor", anchor);
  return out;
}

// One DiT block: adaLN-modulated self-attention, cross-attention to anchor
// features (skipped for scene variants), and a pointwise MLP, each behind a
// gated residual. Anchor features pass through untouched.
inline Tensor dit_block(Tape* tp, const ModelWeights& w, int block, const Tensor& x,
                        const Tensor& anchor_tokens, const Tensor& t_emb) {
  const ModelConfig& cfg = w.config;
  int d = cfg.token_width();
  std::string p = "block" + std::to_string(block);
  Tensor mod = nn::linear(tp, w, p + ".adaln", ops::silu(tp, t_emb));
  auto chunk = [&](int i) { return ops::slice_cols(tp, mod, i * d, d); };

  int c = 0;
  Tensor h = x;
  {
    Tensor shift = chunk(c++), scale = chunk(c++), gate = chunk(c++);
    Tensor m = nn::modulate(tp, ops::layer_norm(tp, h), shift, scale);
    Tensor a = nn::multihead_attention(tp, w, p + ".self", m, m, cfg.num_heads);
    h = ops::add(tp, h, ops::mul_rowvec(tp, a, gate));
  }
  if (cfg.has_cross_attention()) {
    Tensor shift = chunk(c++), scale = chunk(c++), gate = chunk(c++);
    Tensor a = nn::multihead_attention(tp, w, p + ".cross",
                                       nn::modulate(tp, ops::layer_norm(tp, h), shift, scale),
                                       anchor_tokens, cfg.num_heads);
    h = ops::add(tp, h, ops::mul_rowvec(tp, a, gate));
  }
  {
    Tensor shift = chunk(c++), scale = chunk(c++), gate = chunk(c++);
    Tensor m = nn::mlp(tp, w, p + ".mlp", nn::modulate(tp, ops::layer_norm(tp, h), shift, scale));
    h = ops::add(tp, h, ops::mul_rowvec(tp, m, gate));
  }
  return h;
}

inline Tensor apply_head(Tape* tp, const ModelWeights& w, const Tensor& x, const Tensor& t_emb) {
  const ModelConfig& cfg = w.config;
  int d = cfg.token_width();
  Tensor mod = nn::linear(tp, w, "head.adaln", ops::silu(tp, t_emb));
  Tensor shift = ops::slice_cols(tp, mod, 0, d);
  Tensor scale = ops::slice_cols(tp, mod, d, d);
  Tensor h = nn::modulate(tp, ops::layer_norm(tp, x), shift, scale);
  return nn::linear(tp, w, "head.out", h);
}

struct ModelOutputs {
  Tensor eps;  // N x 3 noise prediction, or the direct prediction for RD/RP
  Tensor v;    // N x 3 variance interpolation in (0,1); empty for RD/RP
};

inline ModelOutputs forward(Tape* tp, const ModelWeights& w, const Tensor& noised,
                            const Tensor& action, const Tensor& anchor, int t) {
  const ModelConfig& cfg = w.config;
  Tensor t_emb = timestep_embedding(tp, w, t);
  EncodedScene enc = encode(tp, w, noised, action, anchor);
  Tensor x = enc.tokens;
  for (int i = 0; i < cfg.depth; ++i) x = dit_block(tp, w, i, x, enc.anchor_tokens, t_emb);
  Tensor out = apply_head(tp, w, x, t_emb);
  if (merges_scene(cfg.variant)) out = ops::slice_rows(tp, out, 0, enc.num_action);

  ModelOutputs res;
  if (is_regression(cfg.variant)) {
    res.eps = out;
    return res;
  }
  res.eps = ops::slice_cols(tp, out, 0, 3);
  res.v = ops::sigmoid(tp, ops::slice_cols(tp, out, 3, 3));
  return res;
}

}  // namespace dispdiff
