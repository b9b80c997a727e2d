#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "utm/tensor.hpp"

namespace utm {

struct RadarPoint {
  double x = 0, y = 0, z = 0;  // meters, radar frame
};

/// Camera intrinsics + radar->camera extrinsic + frame geometry. All
/// projection math runs in double regardless of the tensor scalar type.
struct SensorRig {
  double fx = 0, fy = 0;  // focal lengths, pixels
  double cx = 0, cy = 0;  // principal point
  std::array<double, 12> extrinsic{};  // row-major 3x4 [R|t]
  int width = 0, height = 0;
  double max_range_m = 10.0;

  /// Throws std::invalid_argument unless fx,fy > 0, dims > 0, and the
  /// rotation block is orthonormal within 1e-6.
  void validate() const;

  /// Identity extrinsics with the principal point at the frame center.
  static SensorRig centered(int width, int height, double fx, double fy,
                            double max_range_m = 10.0);
};

struct PixelHit {
  double u = 0, v = 0;  // continuous pixel coordinates
  double depth = 0;     // camera-frame z, meters
};

/// Pinhole projection through [R|t] then K. Empty when the camera-frame
/// depth is <= 0 or the rounded pixel falls outside the frame.
std::optional<PixelHit> project_point(const RadarPoint& p,
                                      const SensorRig& rig);

/// [1,H,W] tensor of depths in meters; 0 marks pixels with no radar return.
using DepthImage = Tensor;

/// Rasterize a cloud with nearest-depth wins at each rounded pixel.
DepthImage project_cloud(const std::vector<RadarPoint>& points,
                         const SensorRig& rig);

/// Inverse of project_point for continuous (u,v). Throws on depth <= 0.
RadarPoint backproject(double u, double v, double depth, const SensorRig& rig);

/// Depth clipped to [0, max_range], scaled to [0,1], replicated to 3
/// channels: the auxiliary-branch network input.
Tensor depth_network_input(const DepthImage& depth, double max_range_m);

/// Text key-value calibration file: fx fy cx cy width height max_range_m and
/// a 12-value extrinsic row. Parse failures throw IoError naming the line.
SensorRig load_calibration(const std::string& path);
void save_calibration(const SensorRig& rig, const std::string& path);

}  // namespace utm
