#include "utm/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace utm {

void SceneGenConfig::validate() const {
  check_arg(width > 0 && height > 0, "scene: image dims must be positive");
  check_arg(fx > 0 && fy > 0, "scene: focal lengths must be positive");
  check_arg(min_humans >= 0 && max_humans >= min_humans,
            "scene: need 0 <= min_humans <= max_humans");
  check_arg(z_min > 0 && z_max >= z_min, "scene: bad depth band");
  check_arg(z_max < max_range_m, "scene: depth band exceeds radar range");
  check_arg(distractor_prob >= 0 && distractor_prob <= 1,
            "scene: distractor_prob outside [0,1]");
  check_arg(max_distractors >= 0 && radar_points_per_human >= 0 &&
                clutter_points >= 0,
            "scene: counts must be >= 0");
  check_arg(noise_sigma >= 0 && radar_depth_sigma >= 0,
            "scene: noise sigmas must be >= 0");
  check_arg(background_level >= 0 && background_level <= 1,
            "scene: background_level outside [0,1]");
  check_arg(contrast >= 0, "scene: contrast must be >= 0");
}

SensorRig make_rig(const SceneGenConfig& cfg) {
  return SensorRig::centered(cfg.width, cfg.height, cfg.fx, cfg.fy,
                             cfg.max_range_m);
}

const SceneFrame& Dataset::frame_by_id(int id) const {
  auto it = std::lower_bound(
      frames.begin(), frames.end(), id,
      [](const SceneFrame& f, int v) { return f.frame_id < v; });
  check_arg(it != frames.end() && it->frame_id == id,
            "no frame with id " + std::to_string(id));
  return *it;
}

namespace {

struct Ellipse {
  double u_c, v_c, ru, rv;  // pixel-space center and half-axes
  double qx, qy, qz;        // camera-frame center
  double aw, ah;            // meter half-axes
};

double ellipse_iou(const Ellipse& a, const Ellipse& b) {
  const double ix = std::max(
      0.0, std::min(a.u_c + a.ru, b.u_c + b.ru) - std::max(a.u_c - a.ru, b.u_c - b.ru));
  const double iy = std::max(
      0.0, std::min(a.v_c + a.rv, b.v_c + b.rv) - std::max(a.v_c - a.rv, b.v_c - b.rv));
  const double inter = ix * iy;
  const double uni = 4 * a.ru * a.rv + 4 * b.ru * b.rv - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// Billboard placement fully inside the frame with a 1px margin. Aspect is
// the caller's (humans tall, distractors squat).
Ellipse place_billboard(const SceneGenConfig& cfg, const SensorRig& rig,
                        Rng& rng, double aw, double ah, double z) {
  Ellipse e;
  e.aw = aw;
  e.ah = ah;
  e.qz = z;
  e.ru = rig.fx * aw / z;
  e.rv = rig.fy * ah / z;
  const double margin = 1.0;
  const double u_lo = e.ru + margin, u_hi = cfg.width - 1 - e.ru - margin;
  const double v_lo = e.rv + margin, v_hi = cfg.height - 1 - e.rv - margin;
  check_arg(u_hi > u_lo && v_hi > v_lo,
            "scene: body too large for the frame at minimum depth");
  e.u_c = rng.uniform(u_lo, u_hi);
  e.v_c = rng.uniform(v_lo, v_hi);
  e.qx = (e.u_c - rig.cx) * z / rig.fx;
  e.qy = (e.v_c - rig.cy) * z / rig.fy;
  return e;
}

RadarPoint camera_to_radar(double qx, double qy, double qz,
                           const SensorRig& rig) {
  const auto& e = rig.extrinsic;
  const double dx = qx - e[3], dy = qy - e[7], dz = qz - e[11];
  return {e[0] * dx + e[4] * dy + e[8] * dz,
          e[1] * dx + e[5] * dy + e[9] * dz,
          e[2] * dx + e[6] * dy + e[10] * dz};
}

// Soft-rimmed ellipse body: full brightness inside, linear falloff over the
// outer 15% of the radius, zero outside rho=1 so the gt box stays tight.
void splat(std::vector<double>& canvas, int w, int h, const Ellipse& e) {
  const int u0 = std::max(0, int(std::floor(e.u_c - e.ru)));
  const int u1 = std::min(w - 1, int(std::ceil(e.u_c + e.ru)));
  const int v0 = std::max(0, int(std::floor(e.v_c - e.rv)));
  const int v1 = std::min(h - 1, int(std::ceil(e.v_c + e.rv)));
  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      const double du = (u - e.u_c) / e.ru;
      const double dv = (v - e.v_c) / e.rv;
      const double rho = std::sqrt(du * du + dv * dv);
      if (rho >= 1.0) continue;
      const double s = std::min(1.0, (1.0 - rho) / 0.15);
      double& c = canvas[std::size_t(v) * w + u];
      c = std::max(c, s);
    }
  }
}

}  // namespace

SceneFrame generate_scene(const SceneGenConfig& cfg, const SensorRig& rig,
                          int frame_id, Rng& rng) {
  cfg.validate();
  SceneFrame frame;
  frame.frame_id = frame_id;

  const int n_humans =
      cfg.min_humans == cfg.max_humans
          ? cfg.min_humans
          : int(rng.uniform_int(cfg.min_humans, cfg.max_humans));

  std::vector<Ellipse> humans;
  for (int i = 0; i < n_humans; ++i) {
    Ellipse e{};
    for (int attempt = 0; attempt < 20; ++attempt) {
      const double z = rng.uniform(cfg.z_min, cfg.z_max);
      const double aw = rng.uniform(0.20, 0.30);
      const double ah = rng.uniform(0.70, 0.95);
      e = place_billboard(cfg, rig, rng, aw, ah, z);
      bool ok = true;
      for (const auto& other : humans)
        if (ellipse_iou(e, other) > 0.6) ok = false;
      if (ok) break;
    }
    humans.push_back(e);
    frame.gt_boxes.push_back(BBox{e.u_c - e.ru, e.v_c - e.rv, e.u_c + e.ru,
                                  e.v_c + e.rv}
                                 .clipped(cfg.width, cfg.height));
  }

  std::vector<Ellipse> distractors;
  for (int i = 0; i < cfg.max_distractors; ++i) {
    if (rng.uniform01() >= cfg.distractor_prob) continue;
    Ellipse e{};
    for (int attempt = 0; attempt < 20; ++attempt) {
      const double z = rng.uniform(cfg.z_min, cfg.z_max);
      const double aw = rng.uniform(0.25, 0.60);
      const double ah = aw * rng.uniform(0.5, 1.2);
      e = place_billboard(cfg, rig, rng, aw, ah, z);
      bool ok = true;
      for (const auto& hb : humans)
        if (ellipse_iou(e, hb) > 0.3) ok = false;
      if (ok) break;
    }
    distractors.push_back(e);
  }

  // Thermal canvas: background + contrast * blob field (+ noise), clipped.
  std::vector<double> field(std::size_t(cfg.height) * cfg.width, 0.0);
  for (const auto& e : humans) splat(field, cfg.width, cfg.height, e);
  for (const auto& e : distractors) splat(field, cfg.width, cfg.height, e);

  // Body-surface radar returns with range noise.
  for (const auto& e : humans) {
    for (int k = 0; k < cfg.radar_points_per_human; ++k) {
      double du, dv;
      do {
        du = rng.uniform(-1, 1);
        dv = rng.uniform(-1, 1);
      } while (du * du + dv * dv > 1.0);
      double depth = e.qz;
      if (cfg.radar_depth_sigma > 0)
        depth = std::max(0.1, depth + rng.normal(0, cfg.radar_depth_sigma));
      frame.radar_cloud.push_back(
          camera_to_radar(e.qx + du * e.aw, e.qy + dv * e.ah, depth, rig));
    }
  }

  // Multipath-style clutter scattered across the whole frustum.
  for (int k = 0; k < cfg.clutter_points; ++k) {
    const double u = rng.uniform(0, cfg.width - 1);
    const double v = rng.uniform(0, cfg.height - 1);
    const double d = rng.uniform(0.5, cfg.max_range_m - 0.5);
    frame.radar_cloud.push_back(
        camera_to_radar((u - rig.cx) * d / rig.fx, (v - rig.cy) * d / rig.fy,
                        d, rig));
  }

  std::vector<real> px(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    double v = cfg.background_level + cfg.contrast * field[i];
    if (cfg.noise_sigma > 0) v += rng.normal(0, cfg.noise_sigma);
    px[i] = real(std::clamp(v, 0.0, 1.0));
  }
  frame.thermal = Tensor::from_values({1, cfg.height, cfg.width}, std::move(px));
  return frame;
}

Dataset generate_dataset(const SceneGenConfig& cfg, int n_frames,
                         double train_ratio, double val_ratio) {
  cfg.validate();
  check_arg(n_frames > 0, "generate_dataset needs n_frames > 0");
  check_arg(train_ratio >= 0 && val_ratio >= 0 &&
                train_ratio + val_ratio <= 1.0 + 1e-12,
            "generate_dataset: bad split ratios");
  Dataset ds;
  ds.rig = make_rig(cfg);
  ds.rig.validate();

  const Rng root = Rng::seeded(cfg.seed);
  const Rng frames_root = root.split(0);
  for (int id = 0; id < n_frames; ++id) {
    Rng frame_rng = frames_root.split(std::uint64_t(id));
    ds.frames.push_back(generate_scene(cfg, ds.rig, id, frame_rng));
  }

  Rng split_rng = root.split(1);
  std::vector<int> ids(n_frames);
  for (int i = 0; i < n_frames; ++i) ids[i] = i;
  for (int i = n_frames - 1; i > 0; --i)
    std::swap(ids[i], ids[std::size_t(split_rng.uniform_int(0, i))]);

  const int n_train = int(std::lround(train_ratio * n_frames));
  const int n_val = int(std::lround(val_ratio * n_frames));
  check_arg(n_train + n_val <= n_frames, "generate_dataset: splits overflow");
  ds.train_ids.assign(ids.begin(), ids.begin() + n_train);
  ds.val_ids.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  ds.test_ids.assign(ids.begin() + n_train + n_val, ids.end());
  std::sort(ds.train_ids.begin(), ds.train_ids.end());
  std::sort(ds.val_ids.begin(), ds.val_ids.end());
  std::sort(ds.test_ids.begin(), ds.test_ids.end());
  return ds;
}

std::string frame_name(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", id);
  return buf;
}

void write_pgm16(const Tensor& thermal, const std::string& path) {
  const int h = thermal.dim(1), w = thermal.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << w << " " << h << "\n65535\n";
  std::vector<unsigned char> row(std::size_t(w) * 2);
  const auto& v = thermal.values();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double c = std::clamp(double(v[std::size_t(y) * w + x]), 0.0, 1.0);
      const unsigned q = unsigned(std::lround(c * 65535.0));
      row[std::size_t(x) * 2] = (unsigned char)(q >> 8);
      row[std::size_t(x) * 2 + 1] = (unsigned char)(q & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              std::streamsize(row.size()));
  }
  if (!out) throw IoError("write failure on " + path);
}

Tensor read_pgm16(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  auto next_token = [&]() -> std::string {
    std::string tok;
    for (;;) {
      int c = in.get();
      if (c == EOF) throw IoError(path + ": truncated header");
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) return tok;
        continue;
      }
      tok.push_back(char(c));
    }
  };
  if (next_token() != "P5") throw IoError(path + ": not a P5 PGM");
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0) throw IoError(path + ": bad dimensions");
  if (maxval != 65535) throw IoError(path + ": expected 16-bit maxval 65535");
  std::vector<unsigned char> buf(std::size_t(w) * h * 2);
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (std::size_t(in.gcount()) != buf.size())
    throw IoError(path + ": truncated pixel data");
  std::vector<real> px(std::size_t(w) * h);
  for (std::size_t i = 0; i < px.size(); ++i) {
    const unsigned q = (unsigned(buf[i * 2]) << 8) | unsigned(buf[i * 2 + 1]);
    px[i] = real(double(q) / 65535.0);
  }
  return Tensor::from_values({1, h, w}, std::move(px));
}

void write_radar_csv(const std::vector<RadarPoint>& pts,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  char line[96];
  for (const auto& p : pts) {
    std::snprintf(line, sizeof(line), "%.6f,%.6f,%.6f\n", p.x, p.y, p.z);
    out << line;
  }
  if (!out) throw IoError("write failure on " + path);
}

std::vector<RadarPoint> read_radar_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<RadarPoint> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    RadarPoint p;
    char extra;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf %c", &p.x, &p.y, &p.z, &extra) != 3)
      throw IoError(path + ":" + std::to_string(lineno) + ": bad radar point");
    pts.push_back(p);
  }
  return pts;
}

namespace {

void write_boxes(const std::vector<BBox>& boxes, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  char line[160];
  for (const auto& b : boxes) {
    std::snprintf(line, sizeof(line), "%.6f %.6f %.6f %.6f\n", b.x_min, b.y_min,
                  b.x_max, b.y_max);
    out << line;
  }
  if (!out) throw IoError("write failure on " + path);
}

std::vector<BBox> read_boxes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<BBox> boxes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    BBox b;
    if (std::sscanf(line.c_str(), "%lf %lf %lf %lf", &b.x_min, &b.y_min,
                    &b.x_max, &b.y_max) != 4 ||
        !b.valid())
      throw IoError(path + ":" + std::to_string(lineno) + ": bad box");
    boxes.push_back(b);
  }
  return boxes;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "frames");
  save_calibration(ds.rig, (fs::path(dir) / "calib.txt").string());

  std::ofstream splits(fs::path(dir) / "splits.txt");
  if (!splits) throw IoError("cannot write splits.txt in " + dir);
  auto emit = [&](const std::vector<int>& ids, const char* tag) {
    for (int id : ids) splits << frame_name(id) << " " << tag << "\n";
  };
  emit(ds.train_ids, "train");
  emit(ds.val_ids, "val");
  emit(ds.test_ids, "test");
  splits.close();

  for (const auto& f : ds.frames) {
    const std::string stem =
        (fs::path(dir) / "frames" / frame_name(f.frame_id)).string();
    write_pgm16(f.thermal, stem + ".thermal.pgm");
    write_radar_csv(f.radar_cloud, stem + ".radar.csv");
    write_boxes(f.gt_boxes, stem + ".boxes.txt");
  }
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  const fs::path root(dir);
  if (!fs::exists(root / "calib.txt"))
    throw IoError("calibration file not found: " + (root / "calib.txt").string());
  ds.rig = load_calibration((root / "calib.txt").string());

  std::ifstream splits(root / "splits.txt");
  if (!splits) throw IoError("splits file not found: " +
                             (root / "splits.txt").string());
  std::string name, tag;
  std::vector<std::pair<int, std::string>> entries;
  int lineno = 0;
  std::string line;
  while (std::getline(splits, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (!(ls >> name >> tag) ||
        (tag != "train" && tag != "val" && tag != "test"))
      throw IoError((root / "splits.txt").string() + ":" +
                    std::to_string(lineno) + ": bad split line");
    entries.emplace_back(std::stoi(name), tag);
  }

  std::sort(entries.begin(), entries.end());
  for (const auto& [id, split] : entries) {
    SceneFrame f;
    f.frame_id = id;
    const std::string stem = (root / "frames" / frame_name(id)).string();
    f.thermal = read_pgm16(stem + ".thermal.pgm");
    check_shape(f.thermal.dim(1) == ds.rig.height &&
                    f.thermal.dim(2) == ds.rig.width,
                "frame " + frame_name(id) + " does not match calibration dims");
    f.radar_cloud = read_radar_csv(stem + ".radar.csv");
    f.gt_boxes = read_boxes(stem + ".boxes.txt");
    ds.frames.push_back(std::move(f));
    if (split == "train") ds.train_ids.push_back(id);
    else if (split == "val") ds.val_ids.push_back(id);
    else ds.test_ids.push_back(id);
  }
  return ds;
}

}  // namespace utm
