#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dispdiff/cloth.hpp"
#include "dispdiff/geom.hpp"
#include "dispdiff/rng.hpp"
#include "dispdiff/sim.hpp"
#include "dispdiff/tensor.hpp"

// Cloth-hanging benchmark scene: a procedurally generated cloth starts at a
// fixed pose facing a rigid hanger (tall rod plus a crossbar); grippers pull
// it toward the goal, release, and the cloth settles. Success is a pre-release
// centroid check plus a post-release polygon check on one of the holes.

namespace dispdiff {

enum class Regime { Train, Unseen, OOD };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::Train: return "train";
    case Regime::Unseen: return "unseen";
    case Regime::OOD: return "ood";
  }
  return "?";
}

inline Regime regime_from_string(const std::string& s) {
  if (s == "train") return Regime::Train;
  if (s == "unseen") return Regime::Unseen;
  if (s == "ood") return Regime::OOD;
  throw std::invalid_argument("unknown regime: " + s + " (expected train|unseen|ood)");
}

struct AnchorPose {
  double x = 0.0, y = 0.0, z = 0.0;
  double yaw = 0.0;  // rotation about the rod axis
};

// Uniform pose draws. The x-translation magnitude is drawn from the regime
// range and its sign forced to match the sign of the sampled rotation, so the
// hanger always faces the cloth. Draw order: yaw, |x|, y, z.
inline AnchorPose sample_anchor_pose(Rng& rng, Regime regime) {
  AnchorPose p;
  p.yaw = rng.uniform(-kPi / 3.0, kPi / 3.0);
  double mag = regime == Regime::OOD ? rng.uniform(5.0, 10.0) : rng.uniform(0.0, 5.0);
  p.x = p.yaw >= 0.0 ? mag : -mag;
  p.y = rng.uniform(-10.0, 0.0);
  p.z = regime == Regime::OOD ? rng.uniform(1.0, 5.0) : 0.0;
  return p;
}

// Rigid hanger: a vertical rod from the ground up to the crossbar height and
// a horizontal crossbar capsule across its top; the task goal is the crossbar
// midpoint. Dimensions are calibration constants of the simplified benchmark.
struct AnchorGeometry {
  // tall rod: vertical support whose top pokes above the hanger apex as a
  // hook stub; a hole pushed onto the stub is topologically caught, which is
  // what makes the hanging state stick through the release phase
  double rod_radius = 0.08;
  double rod_bottom = 0.0;
  double rod_top = 8.3;
  // hanger: two arms sloping down from the apex, like a clothes hanger; the
  // near-point contact at the apex lets a gentle straight-line push bend the
  // cloth around the stub
  double arm_radius = 0.05;
  double arm_half_span = 0.7;
  double arm_drop = 0.4;
  double apex_height = 8.0;
  // the observed point cloud covers the hanger region only (the arms and the
  // upper rod), standing in for the partial camera view of the original
  // pipeline; the full rod still collides
  double cloud_rod_extent = 2.0;
};

struct Anchor {
  AnchorGeometry geo;
  AnchorPose pose;

  Vec3 transform(const Vec3& local) const {
    return rotate_z(local, pose.yaw) + Vec3{pose.x, pose.y, pose.z};
  }

  // hanger-component center: the apex where the arms meet; it sits on the
  // rotation axis, so it only translates
  Vec3 goal_location() const { return transform({0.0, 0.0, geo.apex_height}); }

  std::vector<Capsule> primitives() const {
    Vec3 rod_a = transform({0.0, 0.0, geo.rod_bottom});
    Vec3 rod_b = transform({0.0, 0.0, geo.rod_top});
    Vec3 apex = transform({0.0, 0.0, geo.apex_height});
    Vec3 left = transform({-geo.arm_half_span, 0.0, geo.apex_height - geo.arm_drop});
    Vec3 right = transform({geo.arm_half_span, 0.0, geo.apex_height - geo.arm_drop});
    return {Capsule{rod_a, rod_b, geo.rod_radius}, Capsule{apex, left, geo.arm_radius},
            Capsule{apex, right, geo.arm_radius}};
  }

  // Deterministic surface sampling: rings along each capsule axis. Stands in
  // for the partial RGB-D render of the original pipeline.
  Tensor sample_cloud(int rod_rings = 22, int arm_rings = 9, int radial = 14) const {
    std::vector<double> pts;
    auto sample_capsule = [&](const Capsule& c, int rings) {
      Vec3 axis = c.b - c.a;
      double len = axis.norm();
      Vec3 u = axis * (1.0 / len);
      Vec3 ref = std::abs(u.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
      Vec3 n1{u.y * ref.z - u.z * ref.y, u.z * ref.x - u.x * ref.z, u.x * ref.y - u.y * ref.x};
      n1 *= 1.0 / n1.norm();
      Vec3 n2{u.y * n1.z - u.z * n1.y, u.z * n1.x - u.x * n1.z, u.x * n1.y - u.y * n1.x};
      for (int i = 0; i < rings; ++i) {
        double t = rings == 1 ? 0.5 : static_cast<double>(i) / (rings - 1);
        Vec3 center = c.a + axis * t;
        for (int k = 0; k < radial; ++k) {
          double th = 2.0 * kPi * k / radial;
          Vec3 p = center + (n1 * std::cos(th) + n2 * std::sin(th)) * c.radius;
          pts.push_back(p.x);
          pts.push_back(p.y);
          pts.push_back(p.z);
        }
      }
    };
    auto prims = primitives();
    double visible_bottom = std::max(geo.rod_bottom, geo.apex_height - geo.cloud_rod_extent);
    Capsule visible_rod{transform({0.0, 0.0, visible_bottom}), prims[0].b, geo.rod_radius};
    sample_capsule(visible_rod, rod_rings);
    sample_capsule(prims[1], arm_rings);
    sample_capsule(prims[2], arm_rings);
    int count = static_cast<int>(pts.size() / 3);
    return Tensor::from({count, 3}, std::move(pts));
  }
};

// Initial scene constants: cloth centered at (0, 5, 8) hanging vertically and
// facing the hanger along -y; hanger base at the origin, crossbar at
// (0, 0, 8) before the pose transform.
inline constexpr Vec3 kClothStart{0.0, 5.0, 8.0};

// World placement of the cloth grid: i spans world x, j runs down from the
// top edge (j = 0 is where the grippers attach).
inline std::vector<Vec3> initial_cloth_positions(const ClothMesh& mesh) {
  std::vector<Vec3> out;
  out.reserve(mesh.local_positions.size());
  for (const Vec3& l : mesh.local_positions)
    out.push_back(kClothStart + Vec3{l.x, 0.0, -l.y});
  return out;
}

struct Scene {
  ClothMesh mesh;
  Anchor anchor;
  std::array<int, 2> gripper_indices{};
  SimParams params;
  SimState initial_state;
};

inline Scene build_scene(const ClothSpec& cloth, const AnchorPose& pose, const SimParams& params = {}) {
  Scene sc;
  sc.mesh = build_mesh(cloth);
  sc.anchor.pose = pose;
  sc.params = params;
  auto [g0, g1] = gripper_vertices(sc.mesh);
  sc.gripper_indices = {g0, g1};

  SimState st;
  st.pos = initial_cloth_positions(sc.mesh);
  st.vel.assign(st.pos.size(), Vec3{});
  st.springs = sc.mesh.springs;
  st.colliders = sc.anchor.primitives();
  for (int g : sc.gripper_indices) {
    Gripper gr;
    gr.pos = st.pos[std::size_t(g)];
    gr.vertex = g;
    gr.attached = true;
    st.grippers.push_back(gr);
  }
  sc.initial_state = st;
  return sc;
}

inline Vec3 loop_centroid(const SimState& s, const std::vector<int>& loop) {
  Vec3 c;
  for (int v : loop) c += s.pos[std::size_t(v)];
  return c * (1.0 / static_cast<double>(loop.size()));
}

// ---------------------------------------------------------------------------
// policies

using PolicyFn = std::function<std::array<Vec3, 2>(const SimState&)>;

// Privileged demonstration policy. The initial gripper targets place the
// selected hole's loop centroid at the goal while rotating the cloth to match
// the anchor yaw. Each environment step adds a correction proportional to the
// remaining centroid-to-goal error, taken along the horizontal approach
// direction and ratcheted (never unwound): the targets keep pushing until the
// hole is actually seated on the hanger, and the final targets stay at the
// depth that achieved seating, so driving straight to the recorded goal
// state reproduces it.
class PseudoExpertPolicy {
 public:
  PseudoExpertPolicy(const Scene& scene, int hole_choice, double correction_gain = 0.08,
                     double correction_cap = 1.2)
      : loop_(scene.mesh.loop_vertex_ids.at(static_cast<std::size_t>(hole_choice))),
        goal_(scene.anchor.goal_location()),
        gain_(correction_gain),
        cap_(correction_cap) {
    const SimState& s0 = scene.initial_state;
    Vec3 c0 = loop_centroid(s0, loop_);
    Vec3 approach = goal_ - c0;
    approach.z = 0.0;
    double len = approach.norm();
    push_dir_ = len > 1e-9 ? approach * (1.0 / len) : Vec3{0.0, -1.0, 0.0};
    for (int g = 0; g < 2; ++g) {
      Vec3 offset = s0.grippers[std::size_t(g)].pos - c0;
      base_[std::size_t(g)] = goal_ + rotate_z(offset, scene.anchor.pose.yaw);
    }
  }

  std::array<Vec3, 2> operator()(const SimState& s) {
    // grow the push only inside the insertion zone, so the travel phase does
    // not wind it up; it stalls once the hole is seated (error ~ 0)
    Vec3 err = goal_ - loop_centroid(s, loop_);
    double along = err.dot(push_dir_);
    if (along > 0.0 && along < 1.0) push_ = std::min(cap_, push_ + gain_ * along);
    Vec3 corr = push_dir_ * push_;
    return {base_[0] + corr, base_[1] + corr};
  }

 private:
  std::vector<int> loop_;
  Vec3 goal_;
  Vec3 push_dir_;
  std::array<Vec3, 2> base_{};
  double push_ = 0.0;
  double gain_, cap_;
};

// Goal-conditioned policy without privileged access: each gripper drives
// open-loop to the predicted world position of its attached cloth vertex.
class EvaluationPolicy {
 public:
  EvaluationPolicy(const Tensor& predicted_cloud, std::array<int, 2> gripper_indices) {
    if (predicted_cloud.ndim() != 2 || predicted_cloud.shape[1] != 3)
      throw std::invalid_argument("EvaluationPolicy: prediction must be N x 3");
    for (int g = 0; g < 2; ++g) {
      int v = gripper_indices[std::size_t(g)];
      if (v < 0 || v >= predicted_cloud.shape[0])
        throw std::out_of_range("EvaluationPolicy: gripper vertex " + std::to_string(v) +
                                " outside prediction of " + std::to_string(predicted_cloud.shape[0]) +
                                " points");
      targets_[std::size_t(g)] =
          Vec3{predicted_cloud.at(v, 0), predicted_cloud.at(v, 1), predicted_cloud.at(v, 2)};
    }
  }

  std::array<Vec3, 2> operator()(const SimState&) const { return targets_; }

 private:
  std::array<Vec3, 2> targets_{};
};

// ---------------------------------------------------------------------------
// episode

struct EpisodeConfig {
  int manipulation_env_steps = 250;  // enough for the far end of the pose range
  int sim_steps_per_env_step = 8;
  int release_sim_steps = 500;
};

struct EpisodeResult {
  Tensor pre_release;   // cloth vertices at the end of the manipulation phase
  Tensor post_release;  // cloth vertices after the release settle
  bool success = false;
  std::vector<bool> centroid_ok;  // per hole
  std::vector<bool> polygon_ok;   // per hole
  long manipulation_sim_steps = 0;
  long release_sim_steps = 0;
};

inline Tensor positions_tensor(const SimState& s) {
  Tensor t = Tensor::zeros({static_cast<int>(s.pos.size()), 3});
  for (std::size_t i = 0; i < s.pos.size(); ++i) {
    t.at(static_cast<int>(i), 0) = s.pos[i].x;
    t.at(static_cast<int>(i), 1) = s.pos[i].y;
    t.at(static_cast<int>(i), 2) = s.pos[i].z;
  }
  return t;
}

struct SuccessReport {
  bool success = false;
  std::vector<bool> centroid_ok;
  std::vector<bool> polygon_ok;
};

inline constexpr double kCentroidThreshold = 1.3;

// Per hole: the pre-release loop centroid must lie within the threshold of
// the goal, and post-release the goal's xy-projection must lie inside the
// projected loop polygon (boundary counts as inside). Success iff both hold
// for at least one hole.
inline SuccessReport success_check(const Tensor& pre_release, const Tensor& post_release,
                                   const Vec3& goal, const std::vector<std::vector<int>>& loops,
                                   double centroid_threshold = kCentroidThreshold) {
  SuccessReport rep;
  for (const auto& loop : loops) {
    Vec3 centroid;
    for (int v : loop)
      centroid += Vec3{pre_release.at(v, 0), pre_release.at(v, 1), pre_release.at(v, 2)};
    centroid *= 1.0 / static_cast<double>(loop.size());
    bool c_ok = (centroid - goal).norm() < centroid_threshold;

    bool p_ok = false;
    if (loop.size() < 3) {
      std::fprintf(stderr, "success_check: degenerate loop polygon (%zu vertices)\n", loop.size());
    } else {
      std::vector<double> px, py;
      px.reserve(loop.size());
      py.reserve(loop.size());
      for (int v : loop) {
        px.push_back(post_release.at(v, 0));
        py.push_back(post_release.at(v, 1));
      }
      p_ok = point_in_polygon_xy(px, py, goal.x, goal.y);
    }
    rep.centroid_ok.push_back(c_ok);
    rep.polygon_ok.push_back(p_ok);
    if (c_ok && p_ok) rep.success = true;
  }
  return rep;
}

// Manipulation phase (policy queried once per environment step, each worth
// sim_steps_per_env_step integration steps), then grippers release and the
// cloth settles for exactly release_sim_steps.
inline EpisodeResult run_episode(const Scene& scene, const PolicyFn& policy,
                                 const EpisodeConfig& cfg = {},
                                 const std::function<void(const SimState&)>& on_env_step = nullptr) {
  SimState s = scene.initial_state;
  for (int e = 0; e < cfg.manipulation_env_steps; ++e) {
    auto t = policy(s);
    std::vector<Vec3> targets(t.begin(), t.end());
    for (int k = 0; k < cfg.sim_steps_per_env_step; ++k) sim_step(s, targets, scene.params);
    if (on_env_step) on_env_step(s);
  }
  EpisodeResult res;
  res.pre_release = positions_tensor(s);
  res.manipulation_sim_steps = s.step_count;

  s.phase = Phase::Release;
  for (auto& g : s.grippers) g.attached = false;
  std::vector<Vec3> no_targets(s.grippers.size());
  for (int k = 0; k < cfg.release_sim_steps; ++k) {
    sim_step(s, no_targets, scene.params);
    if (on_env_step && (k + 1) % cfg.sim_steps_per_env_step == 0) on_env_step(s);
  }
  res.post_release = positions_tensor(s);
  res.release_sim_steps = s.step_count - res.manipulation_sim_steps;

  SuccessReport rep = success_check(res.pre_release, res.post_release, scene.anchor.goal_location(),
                                    scene.mesh.loop_vertex_ids);
  res.success = rep.success;
  res.centroid_ok = rep.centroid_ok;
  res.polygon_ok = rep.polygon_ok;
  return res;
}

// ---------------------------------------------------------------------------
// scenario config: text key-value file mirroring ClothSpec / AnchorPose

struct Scenario {
  ClothSpec cloth;
  AnchorPose anchor_pose;
  int hole_choice = 0;
};

inline void write_scenario(const std::string& path, const Scenario& sc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_scenario: cannot open " + path);
  char buf[256];
  out << "cloth.node_density = " << sc.cloth.node_density << "\n";
  std::snprintf(buf, sizeof buf, "cloth.width = %.17g\n", sc.cloth.width);
  out << buf;
  std::snprintf(buf, sizeof buf, "cloth.height = %.17g\n", sc.cloth.height);
  out << buf;
  out << "cloth.num_holes = " << sc.cloth.num_holes << "\n";
  for (std::size_t h = 0; h < sc.cloth.holes.size(); ++h) {
    const HoleSpec& hs = sc.cloth.holes[h];
    out << "cloth.hole" << h << " = " << hs.x0 << " " << hs.y0 << " " << hs.x1 << " " << hs.y1
        << "\n";
  }
  std::snprintf(buf, sizeof buf, "anchor.x = %.17g\nanchor.y = %.17g\nanchor.z = %.17g\n",
                sc.anchor_pose.x, sc.anchor_pose.y, sc.anchor_pose.z);
  out << buf;
  std::snprintf(buf, sizeof buf, "anchor.yaw = %.17g\n", sc.anchor_pose.yaw);
  out << buf;
  out << "hole_choice = " << sc.hole_choice << "\n";
}

inline Scenario read_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_scenario: cannot open " + path);
  Scenario sc;
  sc.cloth.holes.clear();
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos || line.empty() || line[0] == '#') continue;
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
    };
    trim(key);
    trim(val);
    std::istringstream vs(val);
    if (key == "cloth.node_density") vs >> sc.cloth.node_density;
    else if (key == "cloth.width") vs >> sc.cloth.width;
    else if (key == "cloth.height") vs >> sc.cloth.height;
    else if (key == "cloth.num_holes") vs >> sc.cloth.num_holes;
    else if (key.rfind("cloth.hole", 0) == 0) {
      HoleSpec h;
      vs >> h.x0 >> h.y0 >> h.x1 >> h.y1;
      sc.cloth.holes.push_back(h);
    } else if (key == "anchor.x") vs >> sc.anchor_pose.x;
    else if (key == "anchor.y") vs >> sc.anchor_pose.y;
    else if (key == "anchor.z") vs >> sc.anchor_pose.z;
    else if (key == "anchor.yaw") vs >> sc.anchor_pose.yaw;
    else if (key == "hole_choice") vs >> sc.hole_choice;
    else throw std::runtime_error("read_scenario: unknown key '" + key + "' in " + path);
  }
  return sc;
}

}  // namespace dispdiff
