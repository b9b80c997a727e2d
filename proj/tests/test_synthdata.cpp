#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "utm/synthdata.hpp"

using namespace utm;
namespace fs = std::filesystem;

namespace {

SceneGenConfig clean_cfg() {
  SceneGenConfig cfg;
  cfg.min_humans = cfg.max_humans = 1;
  cfg.noise_sigma = 0;
  cfg.contrast = 1.0;
  cfg.clutter_points = 0;
  cfg.max_distractors = 0;
  cfg.radar_depth_sigma = 0;
  return cfg;
}

struct Extent {
  int u_min = 1 << 30, u_max = -1, v_min = 1 << 30, v_max = -1;
  bool any() const { return u_max >= 0; }
};

Extent lit_extent(const Tensor& thermal, double threshold) {
  Extent e;
  const int h = thermal.dim(1), w = thermal.dim(2);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      if (double(thermal.values()[std::size_t(v) * w + u]) > threshold) {
        e.u_min = std::min(e.u_min, u);
        e.u_max = std::max(e.u_max, u);
        e.v_min = std::min(e.v_min, v);
        e.v_max = std::max(e.v_max, v);
      }
  return e;
}

}  // namespace

TEST_CASE("single clean human: blob extent equals gt box within 1px") {
  const SceneGenConfig cfg = clean_cfg();
  const SensorRig rig = make_rig(cfg);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = Rng::seeded(1000 + seed);
    SceneFrame f = generate_scene(cfg, rig, int(seed), rng);
    REQUIRE_EQ(f.gt_boxes.size(), 1);
    const BBox& b = f.gt_boxes[0];
    const Extent e = lit_extent(f.thermal, cfg.background_level);
    REQUIRE(e.any());
    CHECK_LE(std::abs(e.u_min - b.x_min), 1.0);
    CHECK_LE(std::abs(e.u_max - b.x_max), 1.0);
    CHECK_LE(std::abs(e.v_min - b.y_min), 1.0);
    CHECK_LE(std::abs(e.v_max - b.y_max), 1.0);
    // Nothing lit outside the (1px-grown) box: exactly one blob.
    for (int v = 0; v < f.thermal.dim(1); ++v)
      for (int u = 0; u < f.thermal.dim(2); ++u)
        if (double(f.thermal.values()[std::size_t(v) * f.thermal.dim(2) + u]) >
            cfg.background_level) {
          CHECK_GE(u + 1.0, b.x_min);
          CHECK_LE(u - 1.0, b.x_max);
          CHECK_GE(v + 1.0, b.y_min);
          CHECK_LE(v - 1.0, b.y_max);
        }
    // All radar returns belong to the body (no clutter configured).
    CHECK_EQ(f.radar_cloud.size(), std::size_t(cfg.radar_points_per_human));
  }
}

TEST_CASE("background-only mode yields empty gt and only clutter") {
  SceneGenConfig cfg = clean_cfg();
  cfg.min_humans = cfg.max_humans = 0;
  cfg.clutter_points = 25;
  const SensorRig rig = make_rig(cfg);
  Rng rng = Rng::seeded(7);
  SceneFrame f = generate_scene(cfg, rig, 0, rng);
  CHECK(f.gt_boxes.empty());
  CHECK_EQ(f.radar_cloud.size(), 25);
  // Flat background everywhere.
  for (real v : f.thermal.values())
    CHECK_EQ(double(v), cfg.background_level);
}

TEST_CASE("generation is a pure function of config and seed") {
  SceneGenConfig cfg;
  cfg.seed = 42;
  Dataset a = generate_dataset(cfg, 6);
  Dataset b = generate_dataset(cfg, 6);
  REQUIRE_EQ(a.frames.size(), b.frames.size());
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    CHECK_EQ(a.frames[i].thermal.values(), b.frames[i].thermal.values());
    REQUIRE_EQ(a.frames[i].radar_cloud.size(), b.frames[i].radar_cloud.size());
    for (std::size_t k = 0; k < a.frames[i].radar_cloud.size(); ++k) {
      CHECK_EQ(a.frames[i].radar_cloud[k].x, b.frames[i].radar_cloud[k].x);
      CHECK_EQ(a.frames[i].radar_cloud[k].y, b.frames[i].radar_cloud[k].y);
      CHECK_EQ(a.frames[i].radar_cloud[k].z, b.frames[i].radar_cloud[k].z);
    }
    REQUIRE_EQ(a.frames[i].gt_boxes.size(), b.frames[i].gt_boxes.size());
    for (std::size_t k = 0; k < a.frames[i].gt_boxes.size(); ++k)
      CHECK_EQ(a.frames[i].gt_boxes[k].x_min, b.frames[i].gt_boxes[k].x_min);
  }
  CHECK_EQ(a.train_ids, b.train_ids);
  CHECK_EQ(a.val_ids, b.val_ids);
  CHECK_EQ(a.test_ids, b.test_ids);
}

TEST_CASE("frames respect invariants at full config") {
  SceneGenConfig cfg;  // defaults: 1-4 humans, distractors, clutter, noise
  cfg.seed = 77;
  Dataset ds = generate_dataset(cfg, 12);
  for (const auto& f : ds.frames) {
    CHECK_GE(f.gt_boxes.size(), 1);
    CHECK_LE(f.gt_boxes.size(), 4);
    for (const auto& b : f.gt_boxes) {
      CHECK(b.valid());
      CHECK_GE(b.x_min, 0.0);
      CHECK_GE(b.y_min, 0.0);
      CHECK_LE(b.x_max, double(cfg.width));
      CHECK_LE(b.y_max, double(cfg.height));
    }
    for (real v : f.thermal.values()) {
      CHECK_GE(double(v), 0.0);
      CHECK_LE(double(v), 1.0);
    }
  }
}

TEST_CASE("split sizes, disjointness, and completeness") {
  SceneGenConfig cfg;
  cfg.seed = 5;
  cfg.min_humans = cfg.max_humans = 1;
  cfg.radar_points_per_human = 4;
  cfg.clutter_points = 0;
  Dataset ds = generate_dataset(cfg, 100, 0.64, 0.18);
  CHECK_EQ(ds.train_ids.size(), 64);
  CHECK_EQ(ds.val_ids.size(), 18);
  CHECK_EQ(ds.test_ids.size(), 18);
  std::set<int> all;
  for (int id : ds.train_ids) all.insert(id);
  for (int id : ds.val_ids) all.insert(id);
  for (int id : ds.test_ids) all.insert(id);
  CHECK_EQ(all.size(), 100);
  CHECK_EQ(*all.begin(), 0);
  CHECK_EQ(*all.rbegin(), 99);
  // The shuffle actually shuffles: train is not simply 0..63.
  bool contiguous = true;
  for (std::size_t i = 0; i < ds.train_ids.size(); ++i)
    if (ds.train_ids[i] != int(i)) contiguous = false;
  CHECK_FALSE(contiguous);
}

TEST_CASE("dataset write/load round trip") {
  const fs::path dir = fs::temp_directory_path() / "utm_synth_rt";
  fs::remove_all(dir);

  SceneGenConfig cfg;
  cfg.seed = 99;
  Dataset ds = generate_dataset(cfg, 10, 0.6, 0.2);
  write_dataset(ds, dir.string());
  Dataset back = load_dataset(dir.string());

  CHECK_EQ(back.rig.width, ds.rig.width);
  CHECK_EQ(back.rig.fx, ds.rig.fx);
  CHECK_EQ(back.train_ids, ds.train_ids);
  CHECK_EQ(back.val_ids, ds.val_ids);
  CHECK_EQ(back.test_ids, ds.test_ids);
  REQUIRE_EQ(back.frames.size(), ds.frames.size());
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    const auto& fa = ds.frames[i];
    const auto& fb = back.frames[i];
    CHECK_EQ(fa.frame_id, fb.frame_id);
    REQUIRE_EQ(fa.thermal.size(), fb.thermal.size());
    for (std::size_t k = 0; k < fa.thermal.size(); ++k)
      CHECK_LE(std::abs(double(fa.thermal.values()[k]) -
                        double(fb.thermal.values()[k])),
               0.5 / 65535.0 + 1e-9);
    REQUIRE_EQ(fa.radar_cloud.size(), fb.radar_cloud.size());
    for (std::size_t k = 0; k < fa.radar_cloud.size(); ++k) {
      CHECK_LE(std::abs(fa.radar_cloud[k].x - fb.radar_cloud[k].x), 5.1e-7);
      CHECK_LE(std::abs(fa.radar_cloud[k].y - fb.radar_cloud[k].y), 5.1e-7);
      CHECK_LE(std::abs(fa.radar_cloud[k].z - fb.radar_cloud[k].z), 5.1e-7);
    }
    REQUIRE_EQ(fa.gt_boxes.size(), fb.gt_boxes.size());
    for (std::size_t k = 0; k < fa.gt_boxes.size(); ++k) {
      CHECK_LE(std::abs(fa.gt_boxes[k].x_min - fb.gt_boxes[k].x_min), 5.1e-7);
      CHECK_LE(std::abs(fa.gt_boxes[k].y_max - fb.gt_boxes[k].y_max), 5.1e-7);
    }
  }
  CHECK_NOTHROW(back.frame_by_id(3));
  CHECK_THROWS_AS(back.frame_by_id(10), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("loader error paths") {
  const fs::path dir = fs::temp_directory_path() / "utm_synth_err";
  fs::remove_all(dir);

  SceneGenConfig cfg;
  cfg.seed = 3;
  cfg.min_humans = cfg.max_humans = 1;
  Dataset ds = generate_dataset(cfg, 3, 0.34, 0.33);
  write_dataset(ds, dir.string());

  SUBCASE("missing calibration") {
    fs::remove(dir / "calib.txt");
    try {
      load_dataset(dir.string());
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("calibration") != std::string::npos);
    }
  }
  SUBCASE("malformed radar csv names the line") {
    {
      std::ofstream bad(dir / "frames" / "000001.radar.csv");
      bad << "0.1,0.2,0.3\nnot,a,point\n";
    }
    try {
      load_dataset(dir.string());
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }
  SUBCASE("bad split tag") {
    {
      std::ofstream bad(dir / "splits.txt");
      bad << "000000 train\n000001 validation\n";
    }
    CHECK_THROWS_AS(load_dataset(dir.string()), IoError);
  }
  fs::remove_all(dir);
}
