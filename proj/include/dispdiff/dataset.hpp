#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dispdiff/binio.hpp"
#include "dispdiff/cloth.hpp"
#include "dispdiff/env.hpp"
#include "dispdiff/geom.hpp"
#include "dispdiff/model.hpp"
#include "dispdiff/tensor.hpp"

// Demonstration records and their handling: ground-truth displacements,
// object-specific frame transforms, furthest-point downsampling, anchor
// rotation augmentation, and the bit-exact dataset directory format.

namespace dispdiff {

struct DemoRecord {
  Tensor action_start;  // P_A: initial cloth vertices, world frame, N x 3
  Tensor action_goal;   // goal cloth vertices (pre-release), index-aligned with action_start
  Tensor anchor_cloud;  // anchor point cloud, world frame, M x 3
  ClothSpec cloth;
  AnchorPose anchor_pose;
  std::array<int, 2> gripper_indices{};
  std::vector<std::vector<int>> loop_vertex_ids;
  Vec3 goal_location;
};

// Ground-truth cross-displacement: per-index difference goal - start.
inline Tensor compute_gt_displacements(const DemoRecord& demo) {
  if (!same_shape(demo.action_start, demo.action_goal))
    throw ShapeError("compute_gt_displacements: start " + shape_str(demo.action_start.shape) +
                     " vs goal " + shape_str(demo.action_goal.shape));
  Tensor d = Tensor::zeros(demo.action_start.shape);
  for (std::size_t i = 0; i < d.data->size(); ++i)
    (*d.data)[i] = (*demo.action_goal.data)[i] - (*demo.action_start.data)[i];
  return d;
}

inline Vec3 cloud_mean(const Tensor& pts) {
  if (pts.ndim() != 2 || pts.shape[1] != 3 || pts.shape[0] == 0)
    throw ShapeError("cloud_mean: expected non-empty N x 3 cloud, got " + shape_str(pts.shape));
  Vec3 m;
  for (int i = 0; i < pts.shape[0]; ++i) m += Vec3{pts.at(i, 0), pts.at(i, 1), pts.at(i, 2)};
  return m * (1.0 / pts.shape[0]);
}

inline Tensor translate_cloud(const Tensor& pts, const Vec3& t) {
  Tensor out = pts.clone();
  for (int i = 0; i < out.shape[0]; ++i) {
    out.at(i, 0) += t.x;
    out.at(i, 1) += t.y;
    out.at(i, 2) += t.z;
  }
  return out;
}

struct FrameInfo {
  Vec3 action_mean;
  Vec3 anchor_mean;
};

struct CenteredDemo {
  Tensor action;        // P_A - mean(P_A)
  Tensor anchor;        // P_B - mean(P_B)
  Tensor displacement;  // (P*_A - mean(P_B)) - (P_A - mean(P_A))
  FrameInfo frames;
};

// Object-specific frames: the action context is centered in its own frame,
// the anchor (and the goal) in the anchor frame. Algebraically the centered
// displacement equals the raw one shifted by (mean_A - mean_B).
inline CenteredDemo center_frames(const Tensor& action_start, const Tensor& action_goal,
                                  const Tensor& anchor_cloud) {
  CenteredDemo out;
  out.frames.action_mean = cloud_mean(action_start);
  out.frames.anchor_mean = cloud_mean(anchor_cloud);
  out.action = translate_cloud(action_start, -out.frames.action_mean);
  out.anchor = translate_cloud(anchor_cloud, -out.frames.anchor_mean);
  Tensor goal_centered = translate_cloud(action_goal, -out.frames.anchor_mean);
  out.displacement = Tensor::zeros(action_start.shape);
  for (std::size_t i = 0; i < out.displacement.data->size(); ++i)
    (*out.displacement.data)[i] = (*goal_centered.data)[i] - (*out.action.data)[i];
  return out;
}

inline CenteredDemo center_frames(const DemoRecord& demo) {
  return center_frames(demo.action_start, demo.action_goal, demo.anchor_cloud);
}

// Greedy furthest-point sampling: repeatedly take the point with the largest
// distance to the selected set; ties break to the lowest index.
inline std::vector<int> fps_downsample(const Tensor& pts, int k, int start = 0) {
  if (pts.ndim() != 2 || pts.shape[1] != 3)
    throw ShapeError("fps_downsample: expected N x 3 cloud, got " + shape_str(pts.shape));
  int n = pts.shape[0];
  if (k > n) throw std::invalid_argument("fps_downsample: k > point count");
  if (k < 1) throw std::invalid_argument("fps_downsample: k must be >= 1");
  if (start < 0 || start >= n) throw std::out_of_range("fps_downsample: bad start index");

  auto dist2 = [&](int a, int b) {
    double dx = pts.at(a, 0) - pts.at(b, 0);
    double dy = pts.at(a, 1) - pts.at(b, 1);
    double dz = pts.at(a, 2) - pts.at(b, 2);
    return dx * dx + dy * dy + dz * dz;
  };

  std::vector<int> selected;
  selected.reserve(static_cast<std::size_t>(k));
  selected.push_back(start);
  std::vector<double> min_d2(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) min_d2[std::size_t(i)] = dist2(i, start);

  while (static_cast<int>(selected.size()) < k) {
    int best = 0;
    double best_d = -1.0;
    for (int i = 0; i < n; ++i)
      if (min_d2[std::size_t(i)] > best_d) {
        best_d = min_d2[std::size_t(i)];
        best = i;
      }
    selected.push_back(best);
    for (int i = 0; i < n; ++i) {
      double d = dist2(i, best);
      if (d < min_d2[std::size_t(i)]) min_d2[std::size_t(i)] = d;
    }
  }
  return selected;
}

inline Tensor gather_cloud(const Tensor& pts, const std::vector<int>& idx) {
  Tensor out = Tensor::zeros({static_cast<int>(idx.size()), 3});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (int j = 0; j < 3; ++j) out.at(static_cast<int>(r), j) = pts.at(idx[r], j);
  return out;
}

// Rotates the anchor cloud about the vertical axis through its own centroid,
// so it commutes with anchor-frame centering.
inline Tensor augment_zrot(const Tensor& anchor_cloud, double theta) {
  Vec3 c = cloud_mean(anchor_cloud);
  Tensor out = Tensor::zeros(anchor_cloud.shape);
  for (int i = 0; i < anchor_cloud.shape[0]; ++i) {
    Vec3 p{anchor_cloud.at(i, 0), anchor_cloud.at(i, 1), anchor_cloud.at(i, 2)};
    Vec3 q = rotate_z(p - c, theta) + c;
    out.at(i, 0) = q.x;
    out.at(i, 1) = q.y;
    out.at(i, 2) = q.z;
  }
  return out;
}

// ---------------------------------------------------------------------------
// variant-dependent framing

// Translation frame used for model inputs and targets: object-specific frames
// by default, none for the world-frame ablations, and a common scene frame
// for the merged-scene variants.
struct VariantFrames {
  Vec3 action_center;  // subtracted from the action cloud (and its own frame)
  Vec3 goal_center;    // subtracted from the anchor cloud and the goal
};

inline VariantFrames compute_variant_frames(Variant v, const Tensor& action, const Tensor& anchor) {
  VariantFrames f;
  if (uses_world_frame(v)) return f;
  if (merges_scene(v)) {
    Vec3 ma = cloud_mean(action), mb = cloud_mean(anchor);
    double na = action.shape[0], nb = anchor.shape[0];
    Vec3 scene = (ma * na + mb * nb) * (1.0 / (na + nb));
    f.action_center = scene;
    f.goal_center = scene;
    return f;
  }
  f.action_center = cloud_mean(action);
  f.goal_center = cloud_mean(anchor);
  return f;
}

// Training target in the model's frame: a displacement field or the absolute
// goal positions, depending on the variant.
inline Tensor variant_target(Variant v, const Tensor& action_start, const Tensor& action_goal,
                             const VariantFrames& f) {
  if (predicts_points(v)) return translate_cloud(action_goal, -f.goal_center);
  Tensor target = Tensor::zeros(action_start.shape);
  Tensor goal_c = translate_cloud(action_goal, -f.goal_center);
  Tensor start_c = translate_cloud(action_start, -f.action_center);
  for (std::size_t i = 0; i < target.data->size(); ++i)
    (*target.data)[i] = (*goal_c.data)[i] - (*start_c.data)[i];
  return target;
}

// Maps a model-frame prediction back to a world-frame goal cloud.
inline Tensor world_prediction(Variant v, const Tensor& action_start, const VariantFrames& f,
                               const Tensor& predicted) {
  if (predicts_points(v)) return translate_cloud(predicted, f.goal_center);
  Tensor out = translate_cloud(action_start, -f.action_center);
  for (std::size_t i = 0; i < out.data->size(); ++i) (*out.data)[i] += (*predicted.data)[i];
  return translate_cloud(out, f.goal_center);
}

// ---------------------------------------------------------------------------
// on-disk format
//
// A dataset directory holds manifest.json plus one raw array file per record
// (flat little-endian float64, arrays concatenated in the order the manifest
// declares). format_version 1.

inline constexpr int kDatasetFormatVersion = 1;

namespace detail {

inline nlohmann::json cloth_to_json(const ClothSpec& c) {
  nlohmann::json holes = nlohmann::json::array();
  for (const HoleSpec& h : c.holes) holes.push_back({{"x0", h.x0}, {"y0", h.y0}, {"x1", h.x1}, {"y1", h.y1}});
  return {{"node_density", c.node_density}, {"width", c.width},       {"height", c.height},
          {"num_holes", c.num_holes},       {"holes", holes}};
}

inline ClothSpec cloth_from_json(const nlohmann::json& j) {
  ClothSpec c;
  c.node_density = j.at("node_density").get<int>();
  c.width = j.at("width").get<double>();
  c.height = j.at("height").get<double>();
  c.num_holes = j.at("num_holes").get<int>();
  for (const auto& h : j.at("holes"))
    c.holes.push_back(HoleSpec{h.at("x0").get<int>(), h.at("y0").get<int>(), h.at("x1").get<int>(),
                               h.at("y1").get<int>()});
  return c;
}

inline nlohmann::json pose_to_json(const AnchorPose& p) {
  return {{"x", p.x}, {"y", p.y}, {"z", p.z}, {"yaw", p.yaw}};
}

inline AnchorPose pose_from_json(const nlohmann::json& j) {
  return AnchorPose{j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>(),
                    j.at("yaw").get<double>()};
}

}  // namespace detail

inline void serialize_dataset(const std::string& dir, const std::vector<DemoRecord>& records) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json recs = nlohmann::json::array();
  for (std::size_t r = 0; r < records.size(); ++r) {
    const DemoRecord& d = records[r];
    char name[32];
    std::snprintf(name, sizeof name, "rec_%05zu.bin", r);

    nlohmann::json arrays = nlohmann::json::array();
    auto declare = [&](const char* aname, const Tensor& t) {
      arrays.push_back({{"name", aname}, {"shape", t.shape}});
    };
    declare("action_start", d.action_start);
    declare("action_goal", d.action_goal);
    declare("anchor_cloud", d.anchor_cloud);

    recs.push_back({{"id", r},
                    {"file", name},
                    {"cloth", detail::cloth_to_json(d.cloth)},
                    {"anchor_pose", detail::pose_to_json(d.anchor_pose)},
                    {"gripper_indices", d.gripper_indices},
                    {"loop_vertex_ids", d.loop_vertex_ids},
                    {"goal_location", {d.goal_location.x, d.goal_location.y, d.goal_location.z}},
                    {"arrays", arrays}});

    std::ofstream out(fs::path(dir) / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("serialize_dataset: cannot open " + std::string(name));
    write_f64_le(out, *d.action_start.data);
    write_f64_le(out, *d.action_goal.data);
    write_f64_le(out, *d.anchor_cloud.data);
  }
  nlohmann::json manifest = {{"format_version", kDatasetFormatVersion},
                             {"dtype", "f64"},
                             {"endianness", "little"},
                             {"records", recs}};
  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!mf) throw std::runtime_error("serialize_dataset: cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";
}

inline std::vector<DemoRecord> deserialize_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw std::runtime_error("deserialize_dataset: no manifest.json in " + dir);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("deserialize_dataset: corrupt manifest in " + dir + ": " + e.what());
  }
  int version = manifest.at("format_version").get<int>();
  if (version != kDatasetFormatVersion)
    throw std::runtime_error("deserialize_dataset: unknown format_version " +
                             std::to_string(version));

  std::vector<DemoRecord> records;
  for (const auto& rj : manifest.at("records")) {
    DemoRecord d;
    std::string file = rj.at("file").get<std::string>();
    d.cloth = detail::cloth_from_json(rj.at("cloth"));
    d.anchor_pose = detail::pose_from_json(rj.at("anchor_pose"));
    auto gi = rj.at("gripper_indices").get<std::vector<int>>();
    if (gi.size() != 2)
      throw std::runtime_error("deserialize_dataset: record " + file + " needs 2 gripper indices");
    d.gripper_indices = {gi[0], gi[1]};
    d.loop_vertex_ids = rj.at("loop_vertex_ids").get<std::vector<std::vector<int>>>();
    auto gl = rj.at("goal_location").get<std::vector<double>>();
    d.goal_location = Vec3{gl.at(0), gl.at(1), gl.at(2)};

    std::uint64_t expected_bytes = 0;
    std::vector<std::pair<std::string, std::vector<int>>> arrays;
    for (const auto& aj : rj.at("arrays")) {
      auto shape = aj.at("shape").get<std::vector<int>>();
      arrays.emplace_back(aj.at("name").get<std::string>(), shape);
      expected_bytes += static_cast<std::uint64_t>(Tensor::numel_of(shape)) * 8;
    }
    std::string path = (fs::path(dir) / file).string();
    if (file_size_bytes(path) != expected_bytes)
      throw std::runtime_error("deserialize_dataset: record " + file + " has " +
                               std::to_string(file_size_bytes(path)) + " bytes, manifest declares " +
                               std::to_string(expected_bytes));
    std::ifstream in(path, std::ios::binary);
    for (auto& [name, shape] : arrays) {
      Tensor t = Tensor::zeros(shape);
      read_f64_le(in, t.data->data(), t.data->size());
      if (name == "action_start") d.action_start = t;
      else if (name == "action_goal") d.action_goal = t;
      else if (name == "anchor_cloud") d.anchor_cloud = t;
      else throw std::runtime_error("deserialize_dataset: unknown array '" + name + "' in " + file);
    }
    records.push_back(std::move(d));
  }
  return records;
}

}  // namespace dispdiff
