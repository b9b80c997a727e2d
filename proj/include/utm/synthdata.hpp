#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "utm/box.hpp"
#include "utm/geometry.hpp"
#include "utm/rng.hpp"
#include "utm/tensor.hpp"

namespace utm {

/// One synchronized sample. The rig lives on the owning Dataset.
struct SceneFrame {
  int frame_id = 0;
  Tensor thermal;  // [1,H,W], values in [0,1]
  std::vector<RadarPoint> radar_cloud;
  std::vector<BBox> gt_boxes;
};

struct SceneGenConfig {
  int width = 160, height = 128;
  double fx = 120, fy = 120;
  double max_range_m = 10.0;

  int min_humans = 1, max_humans = 4;
  double z_min = 2.0, z_max = 8.0;  // body placement depth band, meters

  double background_level = 0.25;
  double noise_sigma = 0.02;  // thermal pixel noise
  double contrast = 0.5;      // body brightness above background

  // Hot distractors mimic heat sources: human-bright but wrong shape and no
  // radar return. Each of max_distractors appears with distractor_prob.
  int max_distractors = 2;
  double distractor_prob = 0.5;

  int radar_points_per_human = 40;
  double radar_depth_sigma = 0.05;  // meters
  int clutter_points = 30;          // multipath-style random returns

  std::uint64_t seed = 1234;

  void validate() const;
};

struct Dataset {
  SensorRig rig;
  std::vector<SceneFrame> frames;
  std::vector<int> train_ids, val_ids, test_ids;

  const SceneFrame& frame_by_id(int id) const;
};

SensorRig make_rig(const SceneGenConfig& cfg);

/// Procedurally place 1..4 billboard-ellipse bodies, render soft-edged
/// thermal blobs, sample body-surface radar points plus clutter. Ground truth
/// is the analytic projected ellipse extent, so it is tight by construction.
SceneFrame generate_scene(const SceneGenConfig& cfg, const SensorRig& rig,
                          int frame_id, Rng& rng);

/// n_frames scenes on per-frame derived streams + a seeded shuffle split.
Dataset generate_dataset(const SceneGenConfig& cfg, int n_frames,
                         double train_ratio = 0.64, double val_ratio = 0.18);

/// Layout: <dir>/calib.txt, <dir>/splits.txt, <dir>/frames/<id>.thermal.pgm
/// (16-bit big-endian P5), <id>.radar.csv (x,y,z 6-decimal), <id>.boxes.txt.
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

/// Frame-id zero-padded to six digits, as used in file names.
std::string frame_name(int id);

/// Per-file readers/writers in the dataset formats, shared with the
/// inference CLI. The PGM is 16-bit big-endian P5 with values mapped to
/// [0,1]; radar CSV rows are x,y,z meters. Parse failures throw IoError
/// naming the offending line.
Tensor read_pgm16(const std::string& path);
void write_pgm16(const Tensor& thermal, const std::string& path);
std::vector<RadarPoint> read_radar_csv(const std::string& path);
void write_radar_csv(const std::vector<RadarPoint>& pts,
                     const std::string& path);

}  // namespace utm
