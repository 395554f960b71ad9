// Command-line entry point: dataset generation, training, prediction,
// rollouts, and evaluation. Every command is deterministic under a fixed
// seed and writes its resolved configuration next to its outputs.

#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dispdiff/arrayfile.hpp"
#include "dispdiff/checkpoint.hpp"
#include "dispdiff/dataset.hpp"
#include "dispdiff/env.hpp"
#include "dispdiff/inference.hpp"
#include "dispdiff/metrics.hpp"
#include "dispdiff/trainer.hpp"

namespace fs = std::filesystem;
using namespace dispdiff;

namespace {

// Relative output paths resolve under $DISPDIFF_OUT when it is set.
std::string resolve_out(const std::string& path) {
  const char* root = std::getenv("DISPDIFF_OUT");
  if (root == nullptr || path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(root) / path).string();
}

void write_resolved_config(const std::string& dir, const std::map<std::string, std::string>& kv) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "config.txt", std::ios::trunc);
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

enum class Task { Simple, Unimodal, Multimodal };

Task task_from_string(const std::string& s) {
  if (s == "simple") return Task::Simple;
  if (s == "unimodal") return Task::Unimodal;
  if (s == "multimodal") return Task::Multimodal;
  throw CLI::ValidationError("--task", "unknown task: " + s);
}

DemoRecord record_from_episode(const Scene& scene, const EpisodeResult& res) {
  DemoRecord d;
  d.action_start = positions_tensor(scene.initial_state);
  d.action_goal = res.pre_release;
  d.anchor_cloud = scene.anchor.sample_cloud();
  d.cloth = scene.mesh.spec;
  d.anchor_pose = scene.anchor.pose;
  d.gripper_indices = scene.gripper_indices;
  d.loop_vertex_ids = scene.mesh.loop_vertex_ids;
  d.goal_location = scene.anchor.goal_location();
  return d;
}

// A successful expert demonstration for the given cloth/pose, or nothing.
bool try_demo(const ClothSpec& cloth, const AnchorPose& pose, int hole_choice,
              const EpisodeConfig& ep_cfg, DemoRecord* out) {
  Scene scene = build_scene(cloth, pose);
  PseudoExpertPolicy expert(scene, hole_choice);
  EpisodeResult res = run_episode(scene, expert, ep_cfg);
  if (!res.success) return false;
  *out = record_from_episode(scene, res);
  return true;
}

// dataset sizes per task (train, unseen, ood), in total demonstrations
int default_count(Task task, Regime regime) {
  bool train = regime == Regime::Train;
  switch (task) {
    case Task::Simple: return train ? 16 : 40;
    case Task::Unimodal: return train ? 64 : 40;
    case Task::Multimodal: return train ? 64 : 40;
  }
  return 0;
}

struct GenOptions {
  std::string out;
  std::string task = "unimodal";
  std::string regime = "train";
  int count = -1;
  std::uint64_t seed = 0;
  int manip_steps = 250;
  int retry_factor = 40;
};

int cmd_gen_data(const GenOptions& opt) {
  Task task = task_from_string(opt.task);
  Regime regime = regime_from_string(opt.regime);
  int count = opt.count > 0 ? opt.count : default_count(task, regime);
  if (task == Task::Multimodal && count % 2 != 0)
    throw CLI::ValidationError("--count", "multimodal datasets need an even demo count");

  EpisodeConfig ep_cfg;
  ep_cfg.manipulation_env_steps = opt.manip_steps;

  std::vector<DemoRecord> records;
  std::uint64_t attempt = 0;
  const std::uint64_t max_attempts =
      static_cast<std::uint64_t>(opt.retry_factor) * static_cast<std::uint64_t>(count) + 64;

  while (static_cast<int>(records.size()) < count) {
    if (attempt >= max_attempts) {
      std::fprintf(stderr, "gen-data: only %zu/%d successful demos after %llu attempts\n",
                   records.size(), count, static_cast<unsigned long long>(attempt));
      return 2;
    }
    Rng rng(mix_seed(opt.seed, attempt++));
    AnchorPose pose = sample_anchor_pose(rng, regime);
    if (task == Task::Multimodal) {
      // one cloth, one pose, one successful demo through each hole
      ClothSpec cloth = generate_cloth(rng, 2);
      DemoRecord d0, d1;
      if (try_demo(cloth, pose, 0, ep_cfg, &d0) && try_demo(cloth, pose, 1, ep_cfg, &d1)) {
        records.push_back(std::move(d0));
        records.push_back(std::move(d1));
      }
    } else {
      ClothSpec cloth = task == Task::Simple ? fixed_cloth() : generate_cloth(rng, 1);
      DemoRecord d;
      if (try_demo(cloth, pose, 0, ep_cfg, &d)) records.push_back(std::move(d));
    }
    if (!records.empty() && records.size() % 16 == 0)
      std::fprintf(stderr, "gen-data: %zu/%d demos\n", records.size(), count);
  }

  std::string out = resolve_out(opt.out);
  serialize_dataset(out, records);
  write_resolved_config(out, {{"command", "gen-data"},
                              {"task", opt.task},
                              {"regime", opt.regime},
                              {"count", std::to_string(count)},
                              {"seed", std::to_string(opt.seed)},
                              {"manip_steps", std::to_string(opt.manip_steps)},
                              {"attempts_used", std::to_string(attempt)}});
  std::printf("gen-data: wrote %d records to %s (%llu attempts)\n", count, out.c_str(),
              static_cast<unsigned long long>(attempt));
  return 0;
}

struct TrainOptions {
  std::string data;
  std::string out;
  std::string variant = "CD";
  std::string resume;
  int epochs = 2000;
  int steps = -1;
  int batch = 16;
  double lr = 1e-4;
  int warmup = 100;
  double weight_decay = 1e-5;
  int T = 100;
  double beta_start = -1.0, beta_end = -1.0;
  double vlb_lambda = kDefaultVlbWeight;
  int hidden = 128;
  int depth = 5;
  int heads = 4;
  int points = 512;
  bool no_augment = false;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int checkpoint_every = 0;
  int log_every = 10;
};

int cmd_train(const TrainOptions& opt) {
  TrainConfig cfg;
  cfg.model.variant = variant_from_string(opt.variant);
  cfg.model.hidden_size = opt.hidden;
  cfg.model.depth = opt.depth;
  cfg.model.num_heads = opt.heads;
  cfg.schedule_T = opt.T;
  cfg.beta_start = opt.beta_start;
  cfg.beta_end = opt.beta_end;
  cfg.learning_rate = opt.lr;
  cfg.warmup_steps = opt.warmup;
  cfg.weight_decay = opt.weight_decay;
  cfg.epochs = opt.epochs;
  cfg.steps = opt.steps;
  cfg.batch_size = opt.batch;
  cfg.vlb_lambda = opt.vlb_lambda;
  cfg.train_points = opt.points;
  cfg.augment_anchor = !opt.no_augment;
  cfg.seed = opt.seed;

  auto records = deserialize_dataset(resolve_out(opt.data));
  std::vector<PreparedDemo> demos;
  demos.reserve(records.size());
  for (const auto& r : records) demos.push_back(prepare_demo(r, cfg.train_points));

  std::string out = resolve_out(opt.out);
  fs::create_directories(out);

  Trainer trainer(cfg, std::move(demos));
  if (!opt.resume.empty()) {
    LoadedCheckpoint lc = load_checkpoint(resolve_out(opt.resume));
    if (!opt.seed_set) cfg.seed = lc.meta.seed;  // replay the original stream
    trainer.restore(lc);
  }

  std::ofstream loss_csv(fs::path(out) / "loss.csv",
                         trainer.start_step > 0 ? std::ios::app : std::ios::trunc);
  if (trainer.start_step == 0) loss_csv << "step,loss\n";

  auto save = [&](const std::string& name) {
    CheckpointMeta meta;
    meta.config = trainer.config().model;
    meta.schedule_T = trainer.config().schedule_T;
    meta.beta_start = trainer.config().beta_start;
    meta.beta_end = trainer.config().beta_end;
    meta.seed = trainer.config().seed;
    meta.step = trainer.optimizer().step_count();
    save_checkpoint((fs::path(out) / name).string(), trainer.weights(), meta,
                    trainer.optimizer_state());
  };

  const int total = trainer.total_steps();
  trainer.run([&](int step, double loss) {
    loss_csv << step << "," << fmt(loss) << "\n";
    if (opt.log_every > 0 && step % opt.log_every == 0) {
      std::printf("step %6d/%d loss %.6f\n", step, total, loss);
      std::fflush(stdout);
      loss_csv.flush();
    }
    if (opt.checkpoint_every > 0 && (step + 1) % opt.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06d.bin", step + 1);
      save(name);
    }
  });
  save("checkpoint.bin");

  write_resolved_config(out, {{"command", "train"},
                              {"data", opt.data},
                              {"variant", opt.variant},
                              {"epochs", std::to_string(opt.epochs)},
                              {"steps", std::to_string(total)},
                              {"batch_size", std::to_string(opt.batch)},
                              {"learning_rate", fmt(opt.lr)},
                              {"warmup_steps", std::to_string(opt.warmup)},
                              {"weight_decay", fmt(opt.weight_decay)},
                              {"schedule_T", std::to_string(opt.T)},
                              {"vlb_lambda", fmt(opt.vlb_lambda)},
                              {"hidden_size", std::to_string(opt.hidden)},
                              {"depth", std::to_string(opt.depth)},
                              {"num_heads", std::to_string(opt.heads)},
                              {"train_points", std::to_string(opt.points)},
                              {"augment", cfg.augment_anchor ? "true" : "false"},
                              {"seed", std::to_string(cfg.seed)}});
  std::printf("train: wrote %s/checkpoint.bin after %d steps\n", out.c_str(), total);
  return 0;
}

struct PredictOptions {
  std::string checkpoint;
  std::string scene;  // scenario config file
  std::string data;   // or dataset + index
  int index = 0;
  int samples = 20;
  std::uint64_t seed = 0;
  std::string out = "predictions.bin";
  int anchor_points = 512;
};

std::pair<Tensor, Tensor> load_scene_clouds(const PredictOptions& opt) {
  if (!opt.scene.empty()) {
    Scenario sc = read_scenario(resolve_out(opt.scene));
    Scene scene = build_scene(sc.cloth, sc.anchor_pose);
    return {positions_tensor(scene.initial_state), scene.anchor.sample_cloud()};
  }
  if (opt.data.empty())
    throw CLI::ValidationError("predict", "need --scene or --data with --index");
  auto records = deserialize_dataset(resolve_out(opt.data));
  if (opt.index < 0 || opt.index >= static_cast<int>(records.size()))
    throw CLI::ValidationError("--index", "record index out of range");
  const DemoRecord& d = records[static_cast<std::size_t>(opt.index)];
  return {d.action_start.clone(), d.anchor_cloud.clone()};
}

int cmd_predict(const PredictOptions& opt) {
  LoadedCheckpoint lc = load_checkpoint(resolve_out(opt.checkpoint));
  Predictor pred{lc.weights,
                 make_linear_schedule(lc.meta.schedule_T, lc.meta.beta_start, lc.meta.beta_end)};

  auto [action, anchor] = load_scene_clouds(opt);
  if (opt.anchor_points > 0 && opt.anchor_points < anchor.shape[0])
    anchor = gather_cloud(anchor, fps_downsample(anchor, opt.anchor_points));

  std::vector<NamedArray> arrays;
  for (int i = 0; i < opt.samples; ++i) {
    Rng rng(mix_seed(opt.seed, static_cast<std::uint64_t>(i)));
    Tensor y = pred.predict(action, anchor, rng);
    char name[32];
    std::snprintf(name, sizeof name, "prediction_%04d", i);
    arrays.push_back(to_named_array(name, y));
  }
  std::string out = resolve_out(opt.out);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  save_arrays(out, arrays);
  std::printf("predict: wrote %d samples of %d points to %s\n", opt.samples, action.shape[0],
              out.c_str());
  return 0;
}

struct RolloutOptions {
  std::string scene;
  std::string prediction;  // array file; empty = privileged expert
  int sample = 0;
  int manip_steps = 250;
  std::string log;
};

int cmd_rollout(const RolloutOptions& opt) {
  Scenario sc = read_scenario(resolve_out(opt.scene));
  Scene scene = build_scene(sc.cloth, sc.anchor_pose);
  EpisodeConfig cfg;
  cfg.manipulation_env_steps = opt.manip_steps;

  PolicyFn policy;
  std::string policy_name;
  if (opt.prediction.empty()) {
    policy = PseudoExpertPolicy(scene, sc.hole_choice);
    policy_name = "expert";
  } else {
    auto arrays = load_arrays(resolve_out(opt.prediction));
    if (opt.sample < 0 || opt.sample >= static_cast<int>(arrays.size()))
      throw CLI::ValidationError("--sample", "prediction sample index out of range");
    policy = EvaluationPolicy(to_tensor(arrays[static_cast<std::size_t>(opt.sample)]),
                              scene.gripper_indices);
    policy_name = "evaluation";
  }

  std::vector<NamedArray> log_frames;
  std::function<void(const SimState&)> on_step;
  if (!opt.log.empty()) {
    on_step = [&](const SimState& s) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%05zu", log_frames.size());
      log_frames.push_back(to_named_array(name, positions_tensor(s)));
    };
  }

  EpisodeResult res = run_episode(scene, policy, cfg, on_step);
  if (!opt.log.empty()) {
    std::string log_path = resolve_out(opt.log);
    save_arrays(log_path, log_frames);
    std::printf("rollout: wrote %zu frames to %s\n", log_frames.size(), log_path.c_str());
  }
  std::printf("rollout: policy=%s success=%d", policy_name.c_str(), res.success ? 1 : 0);
  for (std::size_t h = 0; h < res.centroid_ok.size(); ++h)
    std::printf(" hole%zu(centroid=%d,polygon=%d)", h, res.centroid_ok[h] ? 1 : 0,
                res.polygon_ok[h] ? 1 : 0);
  std::printf("\n");
  return 0;
}

struct EvalOptions {
  std::string checkpoint;
  std::string task = "simple";
  std::string regime = "unseen";
  int trials = 40;
  int samples = 20;
  std::uint64_t seed = 0;
  std::string out = "metrics.csv";
  bool oracle = false;
  int manip_steps = 250;
  int anchor_points = 512;
};

int cmd_eval(const EvalOptions& opt) {
  Task task = task_from_string(opt.task);
  Regime regime = regime_from_string(opt.regime);
  int holes = task == Task::Multimodal ? 2 : 1;

  Predictor pred;
  std::string variant_label = "oracle";
  if (!opt.oracle) {
    LoadedCheckpoint lc = load_checkpoint(resolve_out(opt.checkpoint));
    pred = Predictor{lc.weights,
                     make_linear_schedule(lc.meta.schedule_T, lc.meta.beta_start, lc.meta.beta_end)};
    variant_label = variant_name(lc.weights.config.variant);
  }

  EpisodeConfig ep_cfg;
  ep_cfg.manipulation_env_steps = opt.manip_steps;

  std::vector<bool> successes;
  std::vector<double> rmses;
  std::vector<Tensor> gts;
  std::vector<std::vector<Tensor>> preds_per_gt;
  std::vector<std::vector<Tensor>> refs_per_cloth;
  std::vector<std::vector<Tensor>> preds_per_cloth;

  std::uint64_t attempt = 0;
  const std::uint64_t max_attempts = 40ull * static_cast<std::uint64_t>(opt.trials) + 64;
  int done = 0;
  while (done < opt.trials) {
    if (attempt >= max_attempts) {
      std::fprintf(stderr, "eval: could not build %d reference trials\n", opt.trials);
      return 2;
    }
    Rng rng(mix_seed(opt.seed, 0xEA1000 + attempt));
    ++attempt;
    AnchorPose pose = sample_anchor_pose(rng, regime);
    ClothSpec cloth = task == Task::Simple ? fixed_cloth() : generate_cloth(rng, holes);

    // references: one successful expert demo per hole
    std::vector<DemoRecord> refs;
    bool ok = true;
    for (int h = 0; h < holes && ok; ++h) {
      DemoRecord d;
      ok = try_demo(cloth, pose, h, ep_cfg, &d);
      if (ok) refs.push_back(std::move(d));
    }
    if (!ok) continue;

    const DemoRecord& base = refs[0];
    Tensor anchor = base.anchor_cloud.clone();
    if (opt.anchor_points > 0 && opt.anchor_points < anchor.shape[0])
      anchor = gather_cloud(anchor, fps_downsample(anchor, opt.anchor_points));

    std::vector<Tensor> samples;
    if (opt.oracle) {
      for (const auto& r : refs) samples.push_back(r.action_goal.clone());
    } else {
      samples = pred.predict_many(base.action_start, anchor, opt.samples,
                                  mix_seed(opt.seed, 0x5A17, attempt));
    }

    // rollout with the first sample
    Scene scene = build_scene(cloth, pose);
    EvaluationPolicy policy(samples[0], scene.gripper_indices);
    EpisodeResult res = run_episode(scene, policy, ep_cfg);
    successes.push_back(res.success);

    double best = rmse(samples[0], refs[0].action_goal);
    for (const auto& r : refs) best = std::min(best, rmse(samples[0], r.action_goal));
    rmses.push_back(best);

    std::vector<Tensor> ref_clouds;
    for (const auto& r : refs) {
      gts.push_back(r.action_goal.clone());
      preds_per_gt.push_back(samples);
      ref_clouds.push_back(r.action_goal.clone());
    }
    refs_per_cloth.push_back(ref_clouds);
    preds_per_cloth.push_back(samples);

    ++done;
    std::fprintf(stderr, "eval: trial %d/%d success=%d\n", done, opt.trials, res.success ? 1 : 0);
  }

  double mean_rmse = 0.0;
  for (double r : rmses) mean_rmse += r;
  mean_rmse /= static_cast<double>(rmses.size());

  std::vector<MetricsRow> rows;
  std::string reg = regime_name(regime);
  rows.push_back({reg, variant_label, "success_rate", success_rate(successes),
                  static_cast<int>(successes.size()), opt.seed});
  rows.push_back({reg, variant_label, "rmse", mean_rmse, static_cast<int>(rmses.size()), opt.seed});
  rows.push_back({reg, variant_label, "coverage_rmse", coverage_rmse(gts, preds_per_gt),
                  static_cast<int>(gts.size()), opt.seed});
  rows.push_back({reg, variant_label, "precision_rmse",
                  precision_rmse(refs_per_cloth, preds_per_cloth),
                  static_cast<int>(refs_per_cloth.size()), opt.seed});

  std::string out = resolve_out(opt.out);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_metrics_csv(out, rows);
  for (const auto& r : rows)
    std::printf("eval: %s %s %s = %.6f (n=%d)\n", r.regime.c_str(), r.variant.c_str(),
                r.metric.c_str(), r.value, r.n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense per-point displacement diffusion for cloth hanging: data generation, "
               "training, prediction, rollout, evaluation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a key=value file");

  GenOptions gen;
  auto* g = app.add_subcommand("gen-data", "generate expert demonstrations");
  g->add_option("--out", gen.out, "dataset directory")->required();
  g->add_option("--task", gen.task, "simple | unimodal | multimodal");
  g->add_option("--regime", gen.regime, "train | unseen | ood");
  g->add_option("--count", gen.count, "total demos (default per task/regime)");
  g->add_option("--seed", gen.seed, "rng seed");
  g->add_option("--manip-steps", gen.manip_steps, "manipulation phase env steps");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "train a goal-prediction model");
  t->add_option("--data", tr.data, "dataset directory")->required();
  t->add_option("--out", tr.out, "output directory")->required();
  t->add_option("--variant", tr.variant, "CD CP SD SP CD-W CP-W CD-NAC CP-NAC RD RP");
  t->add_option("--epochs", tr.epochs, "passes over the demo set (desk default 2000)");
  t->add_option("--steps", tr.steps, "gradient steps; overrides --epochs");
  t->add_option("--batch", tr.batch, "batch size");
  t->add_option("--lr", tr.lr, "base learning rate");
  t->add_option("--warmup", tr.warmup, "warmup steps");
  t->add_option("--weight-decay", tr.weight_decay, "decoupled weight decay");
  t->add_option("--T", tr.T, "diffusion steps");
  t->add_option("--beta-start", tr.beta_start, "schedule start (default 0.1/T)");
  t->add_option("--beta-end", tr.beta_end, "schedule end (default 20/T, clamped)");
  t->add_option("--lambda", tr.vlb_lambda, "hybrid loss VLB weight");
  t->add_option("--hidden", tr.hidden, "hidden size");
  t->add_option("--depth", tr.depth, "number of blocks");
  t->add_option("--heads", tr.heads, "attention heads");
  t->add_option("--points", tr.points, "training downsample point count");
  t->add_flag("--no-augment", tr.no_augment, "disable anchor z-rotation augmentation");
  t->add_option("--seed", tr.seed, "rng seed");
  t->add_option("--resume", tr.resume, "checkpoint to resume from");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "periodic checkpoint interval");
  t->add_option("--log-every", tr.log_every, "stdout logging interval");

  PredictOptions pr;
  auto* p = app.add_subcommand("predict", "sample goal-cloud predictions");
  p->add_option("--checkpoint", pr.checkpoint, "trained checkpoint")->required();
  p->add_option("--scene", pr.scene, "scenario config file");
  p->add_option("--data", pr.data, "dataset directory (with --index)");
  p->add_option("--index", pr.index, "record index");
  p->add_option("--samples", pr.samples, "number of samples");
  p->add_option("--seed", pr.seed, "rng seed");
  p->add_option("--out", pr.out, "output array file");
  p->add_option("--anchor-points", pr.anchor_points, "anchor downsample count");

  RolloutOptions ro;
  auto* r = app.add_subcommand("rollout", "run one scripted episode");
  r->add_option("--scene", ro.scene, "scenario config file")->required();
  r->add_option("--prediction", ro.prediction, "prediction array file (default: expert policy)");
  r->add_option("--sample", ro.sample, "which prediction sample to execute");
  r->add_option("--manip-steps", ro.manip_steps, "manipulation phase env steps");
  r->add_option("--log", ro.log, "write per-step particle positions to this array file");

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "closed-loop evaluation with metrics CSV");
  e->add_option("--checkpoint", ev.checkpoint, "trained checkpoint");
  e->add_option("--task", ev.task, "simple | unimodal | multimodal");
  e->add_option("--regime", ev.regime, "train | unseen | ood");
  e->add_option("--trials", ev.trials, "number of evaluation trials");
  e->add_option("--samples", ev.samples, "prediction samples per trial");
  e->add_option("--seed", ev.seed, "rng seed");
  e->add_option("--out", ev.out, "metrics CSV path");
  e->add_flag("--oracle", ev.oracle, "use reference goals instead of model predictions");
  e->add_option("--manip-steps", ev.manip_steps, "manipulation phase env steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*g) return cmd_gen_data(gen);
    if (*t) {
      tr.seed_set = t->count("--seed") > 0;
      return cmd_train(tr);
    }
    if (*p) return cmd_predict(pr);
    if (*r) return cmd_rollout(ro);
    if (*e) {
      if (!ev.oracle && ev.checkpoint.empty()) {
        std::fprintf(stderr, "eval: --checkpoint is required unless --oracle is set\n");
        return 1;
      }
      return cmd_eval(ev);
    }
  } catch (const CLI::Error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  } catch (const std::invalid_argument& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "runtime failure: %s\n", err.what());
    return 2;
  }
  return 0;
}
