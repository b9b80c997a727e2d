#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "utm/box.hpp"
#include "utm/layers.hpp"
#include "utm/rng.hpp"
#include "utm/tensor.hpp"

namespace utm {

/// Anchor priors for the three detection scales. anchors[s][a] is the
/// (width, height) prior in pixels for anchor a at strides[s].
struct AnchorSet {
  std::array<int, 3> strides{8, 16, 32};
  std::array<std::array<std::pair<double, double>, 3>, 3> anchors{};

  void validate() const;

  /// Hand-picked priors, scaled per stride.
  static AnchorSet fallback();

  /// k-means (k=9, Lloyd, deterministic area-quantile init) over ground-truth
  /// box dimensions; falls back to the constants when there are fewer than 9
  /// distinct shapes.
  static AnchorSet from_boxes(const std::vector<BBox>& boxes);
};

struct MdnConfig {
  real lambda_box = real(0.05);
  real lambda_obj = real(1.0);
  std::array<real, 3> obj_balance{real(4.0), real(1.0), real(0.4)};
  double match_ratio_limit = 4.0;

  void validate() const;
};

/// Detection neck + heads. Consumes a fused [128, H/8, W/8] feature map and
/// emits raw per-scale tensors [15, h, w]: 3 anchors x (tx, ty, tw, th, obj).
struct MdnModel {
  ConvBlock down16;  // stride-2, 1/8 -> 1/16
  ConvBlock down32;  // stride-2, 1/16 -> 1/32
  std::array<ConvBlock, 3> head_stem;  // 3x3 128 -> 32 per scale
  std::array<Tensor, 3> head_kernel;   // 1x1 32 -> 15
  std::array<Tensor, 3> head_bias;     // [15]

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

MdnModel build_mdn(Rng& rng);

/// Raw head outputs for one fused map. The fused spatial dims must be
/// divisible by 4 so the two downsamples land on integer grids.
std::array<Tensor, 3> mdn_forward(const MdnModel& model, const Tensor& fused);

/// Decode raw head outputs into image-space detections:
///   center = (cell + 2*sigmoid(t) - 0.5) * stride
///   size   = anchor * (2*sigmoid(t))^2
///   conf   = sigmoid(obj)
/// Image size is the stride-8 grid scaled back up. Boxes are clipped to the
/// image; detections with conf below the threshold or with no area after
/// clipping are dropped.
std::vector<Detection> decode_boxes(const std::array<Tensor, 3>& raw,
                                    const AnchorSet& anchors,
                                    double conf_threshold);

/// Greedy non-maximum suppression: descending confidence (stable, so equal
/// confidences keep input order), suppress anything with IoU > iou_threshold
/// against an already-kept box.
std::vector<Detection> nms(const std::vector<Detection>& dets,
                           double iou_threshold);

/// Composite training loss: lambda_box * mean(1 - CIoU) over matched
/// predictions (per scale, summed) + lambda_obj * balance-weighted BCE over
/// all objectness logits. Targets follow the usual multi-scale assignment:
/// anchors within the w/h ratio limit, home cell plus the two nearest
/// neighbour cells.
Tensor detection_loss(const std::array<Tensor, 3>& raw,
                      const std::vector<BBox>& gt_boxes,
                      const AnchorSet& anchors, const MdnConfig& cfg);

/// "x_min y_min x_max y_max confidence" per line, 6 decimal places.
void write_detections(const std::vector<Detection>& dets,
                      const std::string& path);
std::vector<Detection> load_detections(const std::string& path);

}  // namespace utm
