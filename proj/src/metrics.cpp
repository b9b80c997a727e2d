#include "utm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "utm/mdn.hpp"
#include "utm/tensor.hpp"

namespace utm {

double iou(const BBox& a, const BBox& b) {
  check_arg(a.valid() && b.valid(), "iou: degenerate (zero-area) box");
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<BBox>& gts, double iou_threshold) {
  check_arg(iou_threshold > 0.0 && iou_threshold < 1.0,
            "match_detections: iou threshold must be in (0,1)");
  std::vector<Detection> sorted = dets;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.confidence > b.confidence;
                   });

  MatchResult r;
  r.scored.reserve(sorted.size());
  std::vector<bool> claimed(gts.size(), false);
  for (const Detection& d : sorted) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (claimed[j]) continue;
      const double v = iou(d.box, gts[j]);
      if (v > best_iou) {  // strict: equal IoU keeps the lower index
        best_iou = v;
        best = static_cast<int>(j);
      }
    }
    const bool tp = best >= 0 && best_iou > iou_threshold;
    if (tp) {
      claimed[best] = true;
      ++r.true_positives;
    } else {
      ++r.false_positives;
    }
    r.scored.emplace_back(d.confidence, tp);
  }
  r.false_negatives = static_cast<int>(gts.size()) - r.true_positives;
  return r;
}

std::vector<std::pair<double, double>> pr_curve(
    std::vector<std::pair<double, bool>> scored, int total_gt) {
  check_arg(total_gt >= 0, "pr_curve: total_gt must be non-negative");
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::pair<double, double>> curve;
  curve.reserve(scored.size());
  int tp = 0, fp = 0;
  for (const auto& [conf, is_tp] : scored) {
    (void)conf;
    is_tp ? ++tp : ++fp;
    const double precision = static_cast<double>(tp) / (tp + fp);
    const double recall = total_gt > 0 ? static_cast<double>(tp) / total_gt : 0.0;
    curve.emplace_back(precision, recall);
  }
  return curve;
}

double average_precision(const std::vector<std::pair<double, double>>& curve) {
  if (curve.empty()) return 0.0;
  // points sorted by recall ascending, then walk the 101 grid from the top so
  // the precision envelope is a running max
  std::vector<std::pair<double, double>> by_recall(curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i)
    by_recall[i] = {curve[i].second, curve[i].first};  // (recall, precision)
  std::sort(by_recall.begin(), by_recall.end());

  double sum = 0.0;
  double run_max = 0.0;
  int idx = static_cast<int>(by_recall.size()) - 1;
  for (int k = 100; k >= 0; --k) {
    const double r = k / 100.0;
    while (idx >= 0 && by_recall[idx].first >= r) {
      run_max = std::max(run_max, by_recall[idx].second);
      --idx;
    }
    sum += run_max;
  }
  return sum / 101.0;
}

double max_f1(const std::vector<std::pair<double, double>>& curve) {
  double best = 0.0;
  for (const auto& [p, r] : curve)
    if (p + r > 0.0) best = std::max(best, 2.0 * p * r / (p + r));
  return best;
}

std::vector<double> default_iou_grid() {
  std::vector<double> g;
  for (int i = 50; i <= 95; i += 5) g.push_back(i / 100.0);
  return g;
}

double EvalReport::ap_at(double threshold) const {
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i)
    if (std::abs(iou_thresholds[i] - threshold) < 1e-9) return ap[i];
  throw std::invalid_argument("ap_at: threshold not in evaluated grid");
}

EvalReport evaluate(const std::vector<std::vector<Detection>>& dets_per_frame,
                    const std::vector<std::vector<BBox>>& gts_per_frame,
                    double nms_iou, const std::vector<double>& iou_grid) {
  check_arg(dets_per_frame.size() == gts_per_frame.size(),
            "evaluate: detection/ground-truth frame counts differ");
  check_arg(!iou_grid.empty(), "evaluate: empty IoU grid");
  for (double t : iou_grid)
    check_arg(t > 0.0 && t < 1.0, "evaluate: IoU thresholds must be in (0,1)");

  std::vector<std::vector<Detection>> kept(dets_per_frame.size());
  int total_gt = 0;
  for (std::size_t f = 0; f < dets_per_frame.size(); ++f) {
    kept[f] = nms(dets_per_frame[f], nms_iou);
    total_gt += static_cast<int>(gts_per_frame[f].size());
  }

  EvalReport rep;
  rep.iou_thresholds = iou_grid;
  for (double thr : iou_grid) {
    std::vector<std::pair<double, bool>> pooled;
    for (std::size_t f = 0; f < kept.size(); ++f) {
      MatchResult m = match_detections(kept[f], gts_per_frame[f], thr);
      pooled.insert(pooled.end(), m.scored.begin(), m.scored.end());
    }
    auto curve = pr_curve(std::move(pooled), total_gt);
    rep.ap.push_back(average_precision(curve));
    rep.mf1.push_back(max_f1(curve));
    rep.pr_curves.push_back(std::move(curve));
  }
  double ap_sum = 0.0, f1_sum = 0.0;
  for (std::size_t i = 0; i < iou_grid.size(); ++i) {
    ap_sum += rep.ap[i];
    f1_sum += rep.mf1[i];
  }
  rep.map_50_95 = ap_sum / static_cast<double>(iou_grid.size());
  rep.mmf1_50_95 = f1_sum / static_cast<double>(iou_grid.size());
  return rep;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  char line[96];
  os << "  IoU        AP    max-F1\n";
  for (std::size_t i = 0; i < report.iou_thresholds.size(); ++i) {
    std::snprintf(line, sizeof line, " %4.2f  %8.4f  %8.4f\n",
                  report.iou_thresholds[i], report.ap[i], report.mf1[i]);
    os << line;
  }
  std::snprintf(line, sizeof line, " mean  %8.4f  %8.4f\n", report.map_50_95,
                report.mmf1_50_95);
  os << line;
  return os.str();
}

void write_report_kv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path);
  char line[96];
  std::snprintf(line, sizeof line, "map_50_95=%.6f\n", report.map_50_95);
  out << line;
  std::snprintf(line, sizeof line, "mmf1_50_95=%.6f\n", report.mmf1_50_95);
  out << line;
  for (std::size_t i = 0; i < report.iou_thresholds.size(); ++i) {
    const int pct = static_cast<int>(std::lround(report.iou_thresholds[i] * 100));
    std::snprintf(line, sizeof line, "ap_%d=%.6f\n", pct, report.ap[i]);
    out << line;
    std::snprintf(line, sizeof line, "mf1_%d=%.6f\n", pct, report.mf1[i]);
    out << line;
  }
  if (!out.good()) throw IoError("write failed: " + path);
}

void write_pr_curves(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pr curves: " + path);
  char line[96];
  for (std::size_t i = 0; i < report.iou_thresholds.size(); ++i) {
    std::snprintf(line, sizeof line, "# iou %.2f\n", report.iou_thresholds[i]);
    out << line;
    for (const auto& [p, r] : report.pr_curves[i]) {
      std::snprintf(line, sizeof line, "%.6f %.6f\n", p, r);
      out << line;
    }
    out << "\n";
  }
  if (!out.good()) throw IoError("write failed: " + path);
}

}  // namespace utm
