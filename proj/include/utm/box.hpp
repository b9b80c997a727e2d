#pragma once

#include <algorithm>

namespace utm {

/// Axis-aligned box in continuous pixel coordinates. Box math runs in double
/// everywhere so metric oracles can be matched to 1e-9.
struct BBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const { return x_max > x_min && y_max > y_min; }

  BBox clipped(double w, double h) const {
    return {std::clamp(x_min, 0.0, w), std::clamp(y_min, 0.0, h),
            std::clamp(x_max, 0.0, w), std::clamp(y_max, 0.0, h)};
  }
};

struct Detection {
  BBox box;
  double confidence = 0;  // in [0,1]
};

}  // namespace utm
