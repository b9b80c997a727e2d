#pragma once

#include <string>
#include <utility>
#include <vector>

#include "utm/box.hpp"

namespace utm {

/// Intersection over union of two boxes. Throws std::invalid_argument on a
/// degenerate (zero-area) box.
double iou(const BBox& a, const BBox& b);

/// Greedy confidence-ordered matching of detections against ground truth at
/// one IoU threshold. A detection claims the unmatched ground-truth box with
/// the highest IoU, provided that IoU exceeds the threshold; ties prefer the
/// lower ground-truth index. Each ground-truth box is claimed at most once.
struct MatchResult {
  // (confidence, is_true_positive), sorted by descending confidence; the sort
  // is stable so equal confidences keep their input order.
  std::vector<std::pair<double, bool>> scored;
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
};

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<BBox>& gts, double iou_threshold);

/// Cumulative precision/recall points over detections pooled across frames
/// and sorted by descending confidence. One point per detection. With zero
/// ground-truth boxes recall is fixed at 0.
std::vector<std::pair<double, double>> pr_curve(
    std::vector<std::pair<double, bool>> scored, int total_gt);

/// 101-point interpolated average precision: precision envelope sampled at
/// recalls 0.00, 0.01, ..., 1.00 and averaged.
double average_precision(const std::vector<std::pair<double, double>>& curve);

/// Best F1 = 2pr/(p+r) over the curve points; 0 for an empty curve.
double max_f1(const std::vector<std::pair<double, double>>& curve);

std::vector<double> default_iou_grid();  // 0.50:0.05:0.95

struct EvalReport {
  std::vector<double> iou_thresholds;
  std::vector<double> ap;   // per threshold
  std::vector<double> mf1;  // per threshold
  double map_50_95 = 0.0;
  double mmf1_50_95 = 0.0;
  // per threshold, the pooled precision/recall points
  std::vector<std::vector<std::pair<double, double>>> pr_curves;

  double ap_at(double threshold) const;
};

/// Full evaluation: per-frame NMS at nms_iou, then pooled matching, AP and
/// max-F1 at every threshold in the grid. dets and gts must be aligned
/// frame-for-frame.
EvalReport evaluate(const std::vector<std::vector<Detection>>& dets_per_frame,
                    const std::vector<std::vector<BBox>>& gts_per_frame,
                    double nms_iou,
                    const std::vector<double>& iou_grid = default_iou_grid());

/// Human-readable table of the report.
std::string format_report(const EvalReport& report);

/// key=value lines, one metric per line, parseable without a schema.
void write_report_kv(const EvalReport& report, const std::string& path);

/// Precision/recall point dump, one block per IoU threshold.
void write_pr_curves(const EvalReport& report, const std::string& path);

}  // namespace utm
