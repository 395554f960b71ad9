#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <vector>

#include "dispdiff/checkpoint.hpp"
#include "dispdiff/diffusion.hpp"
#include "dispdiff/model.hpp"
#include "dispdiff/optim.hpp"
#include "dispdiff/rng.hpp"

using namespace dispdiff;
namespace op = dispdiff::ops;

namespace {

Tensor randn(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : *t.data) v = rng.normal() * scale;
  return t;
}

Tensor permute_rows(const Tensor& t, const std::vector<int>& perm) {
  Tensor out = Tensor::zeros(t.shape);
  int f = t.shape[1];
  for (std::size_t r = 0; r < perm.size(); ++r)
    for (int j = 0; j < f; ++j) out.at(static_cast<int>(r), j) = t.at(perm[r], j);
  return out;
}

ModelConfig tiny_config(Variant v) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.depth = 2;
  cfg.num_heads = 2;
  cfg.hidden_size = 12;
  cfg.encoder_hidden = 8;
  cfg.time_freq_dim = 16;
  return cfg;
}

}  // namespace

TEST_CASE("encoded feature widths follow the variant") {
  Rng rng(1);
  SECTION("context variants concatenate two feature sets") {
    ModelConfig cfg;
    cfg.variant = Variant::CD;
    ModelWeights w = build_weights(cfg);
    init_weights(w, rng);
    Tensor dx = randn({512, 3}, rng);
    Tensor act = randn({512, 3}, rng);
    Tensor anc = randn({64, 3}, rng);
    EncodedScene enc = encode(nullptr, w, dx, act, anc);
    CHECK(enc.tokens.shape == std::vector<int>({512, 256}));
    CHECK(enc.anchor_tokens.shape == std::vector<int>({64, 128}));
  }
  SECTION("no-action-context variants keep displacement features only") {
    ModelConfig cfg;
    cfg.variant = Variant::CD_NAC;
    ModelWeights w = build_weights(cfg);
    init_weights(w, rng);
    Tensor dx = randn({512, 3}, rng);
    Tensor anc = randn({64, 3}, rng);
    EncodedScene enc = encode(nullptr, w, dx, Tensor(), anc);
    CHECK(enc.tokens.shape == std::vector<int>({512, 128}));
  }
  SECTION("scene variants merge the clouds into one stream") {
    ModelConfig cfg = tiny_config(Variant::SD);
    ModelWeights w = build_weights(cfg);
    init_weights(w, rng);
    Tensor dx = randn({7, 3}, rng);
    Tensor act = randn({7, 3}, rng);
    Tensor anc = randn({5, 3}, rng);
    EncodedScene enc = encode(nullptr, w, dx, act, anc);
    CHECK(enc.tokens.shape == std::vector<int>({12, 24}));
    CHECK(enc.num_action == 7);
  }
}

TEST_CASE("per-point encoders commute with row permutations exactly") {
  Rng rng(3);
  ModelConfig cfg = tiny_config(Variant::CD);
  ModelWeights w = build_weights(cfg);
  init_weights(w, rng);
  Tensor pts = randn({9, 3}, rng);
  std::vector<int> perm = {4, 0, 8, 2, 6, 1, 7, 3, 5};
  Tensor f = nn::encode_points(nullptr, w, "enc_disp", pts);
  Tensor f_perm = nn::encode_points(nullptr, w, "enc_disp", permute_rows(pts, perm));
  for (std::size_t r = 0; r < perm.size(); ++r)
    for (int j = 0; j < f.shape[1]; ++j)
      CHECK(f_perm.at(static_cast<int>(r), j) == f.at(perm[r], j));
}

TEST_CASE("forward output shapes and v squashing") {
  Rng rng(5);
  for (Variant v : {Variant::CD, Variant::CP, Variant::SD, Variant::CD_NAC, Variant::CD_W}) {
    ModelConfig cfg = tiny_config(v);
    ModelWeights w = build_weights(cfg);
    randomize_all_weights(w, rng);
    Tensor dx = randn({6, 3}, rng);
    Tensor act = randn({6, 3}, rng);
    Tensor anc = randn({4, 3}, rng);
    ModelOutputs out = forward(nullptr, w, dx, act, anc, 7);
    CHECK(out.eps.shape == std::vector<int>({6, 3}));
    CHECK(out.v.shape == std::vector<int>({6, 3}));
    for (double x : *out.v.data) {
      CHECK(x > 0.0);
      CHECK(x < 1.0);
    }
  }
}

TEST_CASE("forward is permutation-equivariant in the action points") {
  Rng rng(7);
  ModelConfig cfg = tiny_config(Variant::CD);
  ModelWeights w = build_weights(cfg);
  randomize_all_weights(w, rng);
  Tensor dx = randn({8, 3}, rng);
  Tensor act = randn({8, 3}, rng);
  Tensor anc = randn({5, 3}, rng);
  ModelOutputs base = forward(nullptr, w, dx, act, anc, 13);

  Rng prng(11);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<int> perm(8);
    for (int i = 0; i < 8; ++i) perm[static_cast<std::size_t>(i)] = i;
    prng.shuffle(perm);
    ModelOutputs permuted =
        forward(nullptr, w, permute_rows(dx, perm), permute_rows(act, perm), anc, 13);
    for (std::size_t r = 0; r < perm.size(); ++r)
      for (int j = 0; j < 3; ++j) {
        CHECK(std::abs(permuted.eps.at(static_cast<int>(r), j) - base.eps.at(perm[r], j)) < 1e-9);
        CHECK(std::abs(permuted.v.at(static_cast<int>(r), j) - base.v.at(perm[r], j)) < 1e-9);
      }
  }
}

TEST_CASE("forward is invariant to anchor point order") {
  Rng rng(17);
  ModelConfig cfg = tiny_config(Variant::CD);
  ModelWeights w = build_weights(cfg);
  randomize_all_weights(w, rng);
  Tensor dx = randn({6, 3}, rng);
  Tensor act = randn({6, 3}, rng);
  Tensor anc = randn({7, 3}, rng);
  ModelOutputs base = forward(nullptr, w, dx, act, anc, 3);
  std::vector<int> perm = {6, 2, 4, 0, 5, 1, 3};
  ModelOutputs permuted = forward(nullptr, w, dx, act, permute_rows(anc, perm), 3);
  for (std::size_t i = 0; i < base.eps.data->size(); ++i) {
    CHECK(std::abs((*permuted.eps.data)[i] - (*base.eps.data)[i]) < 1e-9);
    CHECK(std::abs((*permuted.v.data)[i] - (*base.v.data)[i]) < 1e-9);
  }
}

TEST_CASE("zero-initialized gates make each block the identity") {
  Rng rng(23);
  ModelConfig cfg = tiny_config(Variant::CD);
  ModelWeights w = build_weights(cfg);
  init_weights(w, rng);  // adaLN modulations zero-initialized

  Tensor dx = randn({5, 3}, rng);
  Tensor act = randn({5, 3}, rng);
  Tensor anc = randn({4, 3}, rng);
  EncodedScene enc = encode(nullptr, w, dx, act, anc);
  Tensor t_emb = timestep_embedding(nullptr, w, 9);
  Tensor y = dit_block(nullptr, w, 0, enc.tokens, enc.anchor_tokens, t_emb);
  for (std::size_t i = 0; i < y.data->size(); ++i) CHECK((*y.data)[i] == (*enc.tokens.data)[i]);

  // whole forward equals the blockless path: head applied to encoder features
  ModelOutputs full = forward(nullptr, w, dx, act, anc, 9);
  Tensor blockless = apply_head(nullptr, w, enc.tokens, t_emb);
  Tensor eps0 = op::slice_cols(nullptr, blockless, 0, 3);
  for (std::size_t i = 0; i < full.eps.data->size(); ++i)
    CHECK((*full.eps.data)[i] == (*eps0.data)[i]);
}

TEST_CASE("cross-attention over a single key ignores the query") {
  Rng rng(29);
  ModelConfig cfg = tiny_config(Variant::CD);
  ModelWeights w = build_weights(cfg);
  randomize_all_weights(w, rng);
  int d = cfg.token_width();
  Tensor kv = randn({1, cfg.hidden_size}, rng);
  Tensor q1 = randn({1, d}, rng);
  Tensor q2 = randn({1, d}, rng);
  Tensor o1 = nn::multihead_attention(nullptr, w, "block0.cross", q1, kv, cfg.num_heads);
  Tensor o2 = nn::multihead_attention(nullptr, w, "block0.cross", q2, kv, cfg.num_heads);
  for (std::size_t i = 0; i < o1.data->size(); ++i)
    CHECK((*o1.data)[i] == Catch::Approx((*o2.data)[i]).margin(1e-12));
}

TEST_CASE("regression variants ignore the timestep") {
  Rng rng(31);
  ModelConfig cfg = tiny_config(Variant::RD);
  ModelWeights w = build_weights(cfg);
  randomize_all_weights(w, rng);
  Tensor zeros = Tensor::zeros({6, 3});
  Tensor act = randn({6, 3}, rng);
  Tensor anc = randn({4, 3}, rng);
  ModelOutputs a = forward(nullptr, w, zeros, act, anc, 1);
  ModelOutputs b = forward(nullptr, w, zeros, act, anc, 50);
  CHECK(a.eps.shape == std::vector<int>({6, 3}));
  CHECK(a.v.numel() == 0);
  for (std::size_t i = 0; i < a.eps.data->size(); ++i) CHECK((*a.eps.data)[i] == (*b.eps.data)[i]);
}

TEST_CASE("gradients flow through a depth-1 model with the hybrid loss") {
  Rng rng(41);
  ModelConfig cfg = tiny_config(Variant::CD);
  cfg.depth = 1;
  cfg.hidden_size = 8;
  cfg.encoder_hidden = 6;
  cfg.num_heads = 2;
  ModelWeights w = build_weights(cfg);
  randomize_all_weights(w, rng, 0.2);

  NoiseSchedule s = make_linear_schedule(10);
  const int t = 4;
  Tensor x0 = randn({3, 3}, rng);
  Tensor eps = randn({3, 3}, rng);
  Tensor xt = q_sample(x0, t, eps, s);
  Tensor act = randn({3, 3}, rng);
  Tensor anc = randn({3, 3}, rng);

  auto loss_with_param = [&](const std::string& pname) {
    return [&, pname](Tape* tp, Tensor& var) {
      ModelWeights local = w;  // tensors share data; swap the variable in
      local.at(pname) = var;
      ModelOutputs out = forward(tp, local, xt, act, anc, t);
      // keep the mean channel differentiable so analytic == true derivative
      return hybrid_loss(tp, out.eps, out.v, x0, xt, t, eps, s, 1e-3, false);
    };
  };

  for (const std::string& pname :
       {std::string("enc_disp.l1.w"), std::string("block0.self.q.w"), std::string("block0.cross.k.w"),
        std::string("block0.adaln.w"), std::string("head.out.w"), std::string("t_mlp.l1.w")}) {
    double err = op::grad_check_sampled(loss_with_param(pname), w.at(pname), 1e-6, 24, 99);
    INFO(pname);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  Rng rng(53);
  ModelConfig cfg = tiny_config(Variant::CP);
  ModelWeights w = build_weights(cfg);
  randomize_all_weights(w, rng);

  CheckpointMeta meta;
  meta.config = cfg;
  meta.schedule_T = 50;
  meta.beta_start = 2e-3;
  meta.beta_end = 0.4;
  meta.seed = 1234567;
  meta.step = 987;

  NamedArray extra;
  extra.name = "adam_m:head.out.w";
  extra.shape = w.at("head.out.w").shape;
  extra.values.assign(w.at("head.out.w").data->size(), 0.5);

  std::string path = "ckpt_test.bin";
  save_checkpoint(path, w, meta, {extra});
  LoadedCheckpoint lc = load_checkpoint(path);

  CHECK(lc.meta.config.variant == cfg.variant);
  CHECK(lc.meta.schedule_T == 50);
  CHECK(lc.meta.seed == 1234567);
  CHECK(lc.meta.step == 987);
  REQUIRE(lc.weights.params.size() == w.params.size());
  for (std::size_t p = 0; p < w.params.size(); ++p) {
    const auto& a = *w.params[p].second.data;
    const auto& b = *lc.weights.params[p].second.data;
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
  }
  REQUIRE(lc.extra.size() == 1);
  CHECK(lc.extra[0].name == extra.name);
  CHECK(lc.extra[0].values == extra.values);
  std::remove(path.c_str());

  SECTION("corrupt magic is rejected") {
    std::ofstream bad("ckpt_bad.bin", std::ios::binary);
    bad << "NOPE garbage";
    bad.close();
    CHECK_THROWS(load_checkpoint("ckpt_bad.bin"));
    std::remove("ckpt_bad.bin");
  }
}

TEST_CASE("learning-rate schedule: warmup then cosine") {
  LrSchedule sched;
  sched.base_lr = 1e-3;
  sched.warmup_steps = 10;
  sched.total_steps = 110;
  CHECK(sched.at(0) == Catch::Approx(1e-4));
  CHECK(sched.at(9) == Catch::Approx(1e-3));
  CHECK(sched.at(10) == Catch::Approx(1e-3));
  CHECK(sched.at(60) == Catch::Approx(0.5e-3));
  CHECK(sched.at(110) == Catch::Approx(0.0).margin(1e-12));
  // monotone decay after warmup
  for (int s = 11; s <= 110; ++s) CHECK(sched.at(s) <= sched.at(s - 1) + 1e-15);
}

TEST_CASE("AdamW decreases a quadratic") {
  ModelConfig cfg = tiny_config(Variant::CD);
  cfg.depth = 1;
  ModelWeights w = build_weights(cfg);
  // treat one parameter as the variable of f(x) = sum x^2
  Tensor& x = w.at("head.out.b");
  for (double& v : *x.data) v = 1.0;
  AdamW opt(w, 0.0);
  for (int it = 0; it < 200; ++it) {
    std::vector<std::vector<double>> grads;
    for (auto& [name, t] : w.params) {
      std::vector<double> g(t.data->size(), 0.0);
      if (name == "head.out.b")
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * (*t.data)[i];
      grads.push_back(std::move(g));
    }
    opt.step(w, grads, 0.05);
  }
  for (double v : *x.data) CHECK(std::abs(v) < 0.05);
}
