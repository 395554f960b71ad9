#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dispdiff/dataset.hpp"
#include "dispdiff/rng.hpp"
#include "oracles.hpp"

using namespace dispdiff;

namespace {

Tensor random_cloud(int n, Rng& rng, double scale = 1.0, Vec3 offset = {}) {
  Tensor t = Tensor::zeros({n, 3});
  for (int i = 0; i < n; ++i) {
    t.at(i, 0) = rng.normal() * scale + offset.x;
    t.at(i, 1) = rng.normal() * scale + offset.y;
    t.at(i, 2) = rng.normal() * scale + offset.z;
  }
  return t;
}

DemoRecord random_record(Rng& rng, int n = 12, int m = 9) {
  DemoRecord d;
  d.action_start = random_cloud(n, rng);
  d.action_goal = random_cloud(n, rng, 1.0, {0, -4, 0});
  d.anchor_cloud = random_cloud(m, rng, 0.5, {0, -5, 8});
  d.cloth = fixed_cloth();
  d.anchor_pose = AnchorPose{rng.uniform(-5, 5), rng.uniform(-10, 0), 0.0, rng.uniform(-1, 1)};
  d.gripper_indices = {0, n - 1};
  d.loop_vertex_ids = {{0, 1, 2, 3}};
  d.goal_location = Vec3{rng.normal(), rng.normal(), 8.0};
  return d;
}

}  // namespace

TEST_CASE("ground-truth displacements") {
  Rng rng(2);
  SECTION("identical clouds give a zero field") {
    DemoRecord d = random_record(rng);
    d.action_goal = d.action_start.clone();
    Tensor dx = compute_gt_displacements(d);
    for (double v : *dx.data) CHECK(v == 0.0);
  }
  SECTION("a pure translation gives a constant field") {
    DemoRecord d = random_record(rng);
    d.action_goal = translate_cloud(d.action_start, {0, 0, 1});
    Tensor dx = compute_gt_displacements(d);
    for (int i = 0; i < dx.shape[0]; ++i) {
      CHECK(dx.at(i, 0) == Catch::Approx(0.0).margin(1e-15));
      CHECK(dx.at(i, 1) == Catch::Approx(0.0).margin(1e-15));
      CHECK(dx.at(i, 2) == Catch::Approx(1.0).epsilon(1e-15));
    }
  }
  SECTION("random pair equals the per-index subtraction oracle") {
    DemoRecord d = random_record(rng, 10);
    Tensor dx = compute_gt_displacements(d);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(dx.at(i, j) == d.action_goal.at(i, j) - d.action_start.at(i, j));
  }
  SECTION("length mismatch is rejected") {
    DemoRecord d = random_record(rng);
    d.action_goal = random_cloud(5, rng);
    CHECK_THROWS_AS(compute_gt_displacements(d), ShapeError);
  }
}

TEST_CASE("object-specific frame centering") {
  Rng rng(3);
  DemoRecord d = random_record(rng, 20, 15);
  CenteredDemo c = center_frames(d);

  SECTION("centered action cloud has zero mean") {
    Vec3 m = cloud_mean(c.action);
    CHECK(std::abs(m.x) < 1e-12);
    CHECK(std::abs(m.y) < 1e-12);
    CHECK(std::abs(m.z) < 1e-12);
  }

  SECTION("algebraic identity: centered minus raw displacement = meanA - meanB") {
    Tensor raw = compute_gt_displacements(d);
    Vec3 shift = c.frames.action_mean - c.frames.anchor_mean;
    for (int i = 0; i < raw.shape[0]; ++i) {
      CHECK(c.displacement.at(i, 0) - raw.at(i, 0) == Catch::Approx(shift.x).margin(1e-12));
      CHECK(c.displacement.at(i, 1) - raw.at(i, 1) == Catch::Approx(shift.y).margin(1e-12));
      CHECK(c.displacement.at(i, 2) - raw.at(i, 2) == Catch::Approx(shift.z).margin(1e-12));
    }
  }

  SECTION("coincident frames leave the displacement unchanged") {
    DemoRecord e = d;
    e.anchor_cloud = translate_cloud(e.anchor_cloud, cloud_mean(e.action_start) - cloud_mean(e.anchor_cloud));
    CenteredDemo ce = center_frames(e);
    Tensor raw = compute_gt_displacements(e);
    for (std::size_t i = 0; i < raw.data->size(); ++i)
      CHECK((*ce.displacement.data)[i] == Catch::Approx((*raw.data)[i]).margin(1e-12));
  }

  SECTION("adding the anchor mean back recovers the world goal") {
    // prediction = centered action + displacement, then un-center
    Tensor pred = Tensor::zeros(c.action.shape);
    for (std::size_t i = 0; i < pred.data->size(); ++i)
      (*pred.data)[i] = (*c.action.data)[i] + (*c.displacement.data)[i];
    Tensor world = translate_cloud(pred, c.frames.anchor_mean);
    for (std::size_t i = 0; i < world.data->size(); ++i)
      CHECK((*world.data)[i] == Catch::Approx((*d.action_goal.data)[i]).margin(1e-12));
  }

  SECTION("empty cloud is rejected") {
    Tensor empty = Tensor::zeros({0, 3});
    CHECK_THROWS_AS(center_frames(empty, empty, empty), ShapeError);
  }
}

TEST_CASE("variant frames and world reconstruction invert each other") {
  Rng rng(5);
  Tensor pa = random_cloud(14, rng, 1.0, {1, 4, 8});
  Tensor goal = random_cloud(14, rng, 1.0, {0, -2, 8});
  Tensor pb = random_cloud(11, rng, 0.5, {2, -3, 7});
  for (Variant v : {Variant::CD, Variant::CP, Variant::SD, Variant::SP, Variant::CD_W, Variant::CP_W,
                    Variant::CD_NAC, Variant::RD, Variant::RP}) {
    VariantFrames f = compute_variant_frames(v, pa, pb);
    Tensor target = variant_target(v, pa, goal, f);
    Tensor world = world_prediction(v, pa, f, target);
    for (std::size_t i = 0; i < world.data->size(); ++i) {
      INFO(variant_name(v));
      CHECK((*world.data)[i] == Catch::Approx((*goal.data)[i]).margin(1e-10));
    }
  }
  SECTION("world-frame variants use a zero frame") {
    VariantFrames f = compute_variant_frames(Variant::CD_W, pa, pb);
    CHECK(f.action_center.norm() == 0.0);
    CHECK(f.goal_center.norm() == 0.0);
  }
}

TEST_CASE("furthest point sampling") {
  SECTION("k = N exhausts all points deterministically") {
    Rng rng(7);
    Tensor pts = random_cloud(17, rng);
    auto idx = fps_downsample(pts, 17);
    std::set<int> uniq(idx.begin(), idx.end());
    CHECK(uniq.size() == 17);
  }

  SECTION("colinear points tie-break to the lowest index") {
    Tensor pts = Tensor::zeros({10, 3});
    for (int i = 0; i < 10; ++i) pts.at(i, 0) = static_cast<double>(i);
    auto idx = fps_downsample(pts, 3, 0);
    REQUIRE(idx == std::vector<int>({0, 9, 4}));
  }

  SECTION("matches the O(N^2 k) brute-force oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 60; ++trial) {
      int n = 5 + rng.uniform_int(0, 45);
      int k = 1 + rng.uniform_int(0, n - 1);
      Tensor pts = random_cloud(n, rng);
      auto fast = fps_downsample(pts, k);
      auto slow = oracles::fps_bruteforce(pts, k, 0);
      REQUIRE(fast == slow);
    }
  }

  SECTION("k > N is rejected") {
    Rng rng(13);
    Tensor pts = random_cloud(4, rng);
    CHECK_THROWS_AS(fps_downsample(pts, 5), std::invalid_argument);
  }
}

TEST_CASE("z-rotation augmentation") {
  Rng rng(17);
  Tensor cloud = random_cloud(25, rng, 1.0, {3, -2, 5});

  SECTION("theta = 0 is the identity") {
    Tensor out = augment_zrot(cloud, 0.0);
    for (std::size_t i = 0; i < out.data->size(); ++i) CHECK((*out.data)[i] == (*cloud.data)[i]);
  }
  SECTION("theta = 2 pi is the identity within 1e-9") {
    Tensor out = augment_zrot(cloud, 2.0 * kPi);
    for (std::size_t i = 0; i < out.data->size(); ++i)
      CHECK((*out.data)[i] == Catch::Approx((*cloud.data)[i]).margin(1e-9));
  }
  SECTION("quarter turn about the origin maps (1,0,0) to (0,1,0)") {
    Tensor two = Tensor::from({2, 3}, {1, 0, 0, -1, 0, 0});  // centroid at the origin
    Tensor out = augment_zrot(two, kPi / 2.0);
    CHECK(out.at(0, 0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(out.at(0, 1) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(out.at(0, 2) == Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("rotation preserves the centroid, so centering commutes") {
    Tensor out = augment_zrot(cloud, 1.234);
    Vec3 before = cloud_mean(cloud), after = cloud_mean(out);
    CHECK(after.x == Catch::Approx(before.x).margin(1e-12));
    CHECK(after.y == Catch::Approx(before.y).margin(1e-12));
    CHECK(after.z == Catch::Approx(before.z).margin(1e-12));
  }
}

TEST_CASE("dataset serialization") {
  namespace fs = std::filesystem;
  const std::string dir = "ds_test_tmp";

  SECTION("empty dataset round trips") {
    serialize_dataset(dir, {});
    auto back = deserialize_dataset(dir);
    CHECK(back.empty());
    fs::remove_all(dir);
  }

  SECTION("round trip is bit-exact for 1000 randomized records") {
    Rng rng(19);
    std::vector<DemoRecord> recs;
    for (int i = 0; i < 1000; ++i) recs.push_back(random_record(rng, 4 + (i % 5), 3 + (i % 4)));
    serialize_dataset(dir, recs);
    auto back = deserialize_dataset(dir);
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
      REQUIRE(*back[i].action_start.data == *recs[i].action_start.data);
      REQUIRE(*back[i].action_goal.data == *recs[i].action_goal.data);
      REQUIRE(*back[i].anchor_cloud.data == *recs[i].anchor_cloud.data);
      REQUIRE(back[i].gripper_indices == recs[i].gripper_indices);
      REQUIRE(back[i].loop_vertex_ids == recs[i].loop_vertex_ids);
      REQUIRE(back[i].anchor_pose.x == recs[i].anchor_pose.x);
      REQUIRE(back[i].anchor_pose.yaw == recs[i].anchor_pose.yaw);
      REQUIRE(back[i].goal_location.x == recs[i].goal_location.x);
      REQUIRE(back[i].cloth.width == recs[i].cloth.width);
    }
    fs::remove_all(dir);
  }

  SECTION("byte-count mismatch names the record") {
    Rng rng(23);
    serialize_dataset(dir, {random_record(rng)});
    // truncate the record file
    fs::resize_file(fs::path(dir) / "rec_00000.bin", 16);
    try {
      deserialize_dataset(dir);
      FAIL("expected a byte-count error");
    } catch (const std::runtime_error& e) {
      std::string msg = e.what();
      CHECK(msg.find("rec_00000.bin") != std::string::npos);
    }
    fs::remove_all(dir);
  }

  SECTION("unknown format version is rejected") {
    serialize_dataset(dir, {});
    {
      std::ifstream in(fs::path(dir) / "manifest.json");
      nlohmann::json m = nlohmann::json::parse(in);
      in.close();
      m["format_version"] = 99;
      std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
      out << m.dump(2);
    }
    CHECK_THROWS_WITH(deserialize_dataset(dir), Catch::Matchers::ContainsSubstring("format_version"));
    fs::remove_all(dir);
  }

  SECTION("corrupt manifest is rejected") {
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
    out << "{ not json";
    out.close();
    CHECK_THROWS_WITH(deserialize_dataset(dir), Catch::Matchers::ContainsSubstring("manifest"));
    fs::remove_all(dir);
  }
}
