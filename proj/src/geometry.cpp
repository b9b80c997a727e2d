#include "utm/geometry.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace utm {

void SensorRig::validate() const {
  check_arg(fx > 0 && fy > 0, "rig: focal lengths must be positive");
  check_arg(width > 0 && height > 0, "rig: image dimensions must be positive");
  check_arg(max_range_m > 0, "rig: max_range_m must be positive");
  // R * R^T == I within 1e-6.
  const auto& e = extrinsic;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += e[r * 4 + k] * e[c * 4 + k];
      const double expect = (r == c) ? 1.0 : 0.0;
      check_arg(std::abs(dot - expect) <= 1e-6,
                "rig: rotation block is not orthonormal");
    }
  }
}

SensorRig SensorRig::centered(int width, int height, double fx, double fy,
                              double max_range_m) {
  SensorRig rig;
  rig.fx = fx;
  rig.fy = fy;
  rig.cx = width / 2.0;
  rig.cy = height / 2.0;
  rig.width = width;
  rig.height = height;
  rig.max_range_m = max_range_m;
  rig.extrinsic = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  return rig;
}

std::optional<PixelHit> project_point(const RadarPoint& p,
                                      const SensorRig& rig) {
  const auto& e = rig.extrinsic;
  const double qx = e[0] * p.x + e[1] * p.y + e[2] * p.z + e[3];
  const double qy = e[4] * p.x + e[5] * p.y + e[6] * p.z + e[7];
  const double qz = e[8] * p.x + e[9] * p.y + e[10] * p.z + e[11];
  if (qz <= 0) return std::nullopt;
  const double u = rig.fx * qx / qz + rig.cx;
  const double v = rig.fy * qy / qz + rig.cy;
  const long pu = std::lround(u);
  const long pv = std::lround(v);
  if (pu < 0 || pu >= rig.width || pv < 0 || pv >= rig.height)
    return std::nullopt;
  return PixelHit{u, v, qz};
}

DepthImage project_cloud(const std::vector<RadarPoint>& points,
                         const SensorRig& rig) {
  Tensor img = Tensor::zeros({1, rig.height, rig.width});
  auto& px = img.values();
  for (const auto& p : points) {
    const auto hit = project_point(p, rig);
    if (!hit) continue;
    const std::size_t idx = std::size_t(std::lround(hit->v)) * rig.width +
                            std::size_t(std::lround(hit->u));
    if (px[idx] == real(0) || real(hit->depth) < px[idx])
      px[idx] = real(hit->depth);
  }
  return img;
}

RadarPoint backproject(double u, double v, double depth, const SensorRig& rig) {
  check_arg(depth > 0, "backproject requires depth > 0");
  const double qx = (u - rig.cx) * depth / rig.fx;
  const double qy = (v - rig.cy) * depth / rig.fy;
  const double qz = depth;
  const auto& e = rig.extrinsic;
  const double dx = qx - e[3], dy = qy - e[7], dz = qz - e[11];
  // R^T * (q - t)
  RadarPoint p;
  p.x = e[0] * dx + e[4] * dy + e[8] * dz;
  p.y = e[1] * dx + e[5] * dy + e[9] * dz;
  p.z = e[2] * dx + e[6] * dy + e[10] * dz;
  return p;
}

Tensor depth_network_input(const DepthImage& depth, double max_range_m) {
  check_arg(max_range_m > 0, "max_range_m must be positive");
  check_shape(depth.defined() && depth.shape().size() == 3 && depth.dim(0) == 1,
              "depth_network_input expects a [1,H,W] depth image");
  const std::size_t plane = depth.size();
  std::vector<real> out(3 * plane);
  const auto& src = depth.values();
  for (std::size_t i = 0; i < plane; ++i) {
    double d = double(src[i]) / max_range_m;
    d = d < 0 ? 0 : (d > 1 ? 1 : d);
    out[i] = real(d);
  }
  std::copy(out.begin(), out.begin() + plane, out.begin() + plane);
  std::copy(out.begin(), out.begin() + plane, out.begin() + 2 * plane);
  return Tensor::from_values({3, depth.dim(1), depth.dim(2)}, std::move(out));
}

SensorRig load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("calibration file not found: " + path);
  SensorRig rig;
  bool got_ext = false;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw IoError(path + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key.empty()) continue;
    if (key == "fx") { if (!(ls >> rig.fx)) fail("bad fx"); }
    else if (key == "fy") { if (!(ls >> rig.fy)) fail("bad fy"); }
    else if (key == "cx") { if (!(ls >> rig.cx)) fail("bad cx"); }
    else if (key == "cy") { if (!(ls >> rig.cy)) fail("bad cy"); }
    else if (key == "width") { if (!(ls >> rig.width)) fail("bad width"); }
    else if (key == "height") { if (!(ls >> rig.height)) fail("bad height"); }
    else if (key == "max_range_m") {
      if (!(ls >> rig.max_range_m)) fail("bad max_range_m");
    } else if (key == "extrinsic") {
      for (auto& v : rig.extrinsic)
        if (!(ls >> v)) fail("extrinsic needs 12 values");
      got_ext = true;
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (!got_ext) throw IoError(path + ": missing extrinsic row");
  rig.validate();
  return rig;
}

void save_calibration(const SensorRig& rig, const std::string& path) {
  rig.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write calibration file: " + path);
  out.precision(17);
  out << "fx " << rig.fx << "\n"
      << "fy " << rig.fy << "\n"
      << "cx " << rig.cx << "\n"
      << "cy " << rig.cy << "\n"
      << "width " << rig.width << "\n"
      << "height " << rig.height << "\n"
      << "max_range_m " << rig.max_range_m << "\n"
      << "extrinsic";
  for (double v : rig.extrinsic) out << " " << v;
  out << "\n";
  if (!out) throw IoError("write failure on calibration file: " + path);
}

}  // namespace utm
