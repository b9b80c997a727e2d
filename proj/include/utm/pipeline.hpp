#pragma once

#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "utm/config.hpp"
#include "utm/metrics.hpp"
#include "utm/model.hpp"
#include "utm/synthdata.hpp"

namespace utm {

/// Training aborted on a non-finite loss; the message carries the batch id.
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_map_50_95 = 0;
  double val_mmf1_50_95 = 0;
  double wall_time = 0;  // seconds since training started
};

/// One machine-readable key=value line, as written to train_log.txt.
std::string format_epoch_record(const EpochRecord& r);

struct TrainResult {
  std::vector<EpochRecord> log;
  std::string checkpoint_path;  // best-by-validation-mAP checkpoint
  int best_epoch = -1;
  double best_val_map = 0;
  AnchorSet anchors;  // as resolved for this run
};

/// Full training run. Writes resolved.cfg, train_log.txt and best.ckpt into
/// cfg.output_dir; `progress`, when given, receives one line per epoch.
TrainResult train_run(const RunConfig& cfg, std::ostream* progress = nullptr);

/// Memorization mode: repeated SGD steps on the first training frame.
/// Dropout and weight decay are turned off and a fixed constant step size is
/// used, so this diagnoses the loss/optimizer wiring rather than the training
/// recipe. Stops early once the loss drops below stop_below (0 disables).
/// Writes overfit_log.txt and overfit.ckpt; returns the per-step losses.
std::vector<double> overfit_one_frame(const RunConfig& cfg, int steps,
                                      double stop_below = 0);

struct EvalOptions {
  std::string split = "test";
  double conf_threshold = -1;  // <0: take the config's value
  double nms_iou = -1;         // <0: take the config's value
  int passes = 0;              // >0: override bfe.forward_passes
  bool sweep = false;          // also evaluate NMS thresholds 0.30..0.90
  std::uint64_t seed = 0;      // 0: take the config's seed
};

struct EvalRun {
  EvalReport report;  // at the requested NMS threshold
  std::vector<std::pair<double, EvalReport>> sweep;
  std::vector<std::string> frame_names;
  std::vector<std::vector<Detection>> detections;  // post-NMS, per frame
};

/// Monte-Carlo inference + metrics over a set of frame ids. Per-frame
/// sampling streams are derived from (seed, frame id), so neither frame
/// order nor repetition can change the result.
EvalRun evaluate_split(const UtmModel& model, const RunConfig& cfg,
                       const Dataset& ds, const std::vector<int>& ids,
                       const EvalOptions& opts);

/// Load checkpoint + dataset, evaluate one split, and unless out_dir is
/// empty write report.txt, report_kv.txt, pr_curves.txt, detections/ and
/// (when sweeping) nms_sweep.txt into it.
EvalRun evaluate_checkpoint(const std::string& checkpoint_path,
                            const std::string& dataset_dir,
                            const EvalOptions& opts,
                            const std::string& out_dir);

std::string format_sweep_table(
    const std::vector<std::pair<double, EvalReport>>& sweep);

struct AblationCell {
  std::set<int> layers;
  double p = 0;
  int passes = 0;
  double map_50_95 = 0;
  double mmf1_50_95 = 0;
};

/// Cross product of the three grids; every cell trains from cfg and is
/// evaluated on the test split. Writes ablation.txt under cfg.output_dir.
/// Throws std::invalid_argument("empty ablation grid") if any grid is empty.
std::vector<AblationCell> ablate_run(const RunConfig& cfg,
                                     const std::vector<std::set<int>>& layer_grid,
                                     const std::vector<double>& p_grid,
                                     const std::vector<int>& passes_grid,
                                     std::ostream* progress = nullptr);

/// Rows per layer set with per-block check marks plus the headline metrics.
std::string format_layer_table(const std::vector<AblationCell>& cells,
                               int blocks);
/// One wide row per metric with a p=... column per cell.
std::string format_p_table(const std::vector<AblationCell>& cells);
/// Machine-readable one-line-per-cell dump.
std::string format_cell_table(const std::vector<AblationCell>& cells);

struct CompareRow {
  FusionStrategy strategy;
  EvalReport report;
};

/// Train + evaluate every fusion strategy with one dataset and seed; writes
/// compare.txt under cfg.output_dir.
std::vector<CompareRow> compare_strategies(const RunConfig& cfg,
                                           std::ostream* progress = nullptr);
std::string format_compare_table(const std::vector<CompareRow>& rows);

struct InferResult {
  std::vector<std::string> stems;
  std::vector<std::vector<Detection>> detections;
};

/// Run detection on raw frame files (thermal PGM + radar CSV pairs, with the
/// dataset's calibration file). Writes <stem>.det.txt and optionally
/// <stem>.annotated.pgm into out_dir.
InferResult infer_files(const std::string& checkpoint_path,
                        const std::string& calib_path,
                        const std::vector<std::string>& thermal_paths,
                        const std::vector<std::string>& radar_paths,
                        double conf_threshold, double nms_iou,
                        const std::string& out_dir, bool annotate);

/// Render detections onto the thermal frame as bright one-pixel outlines.
void annotate_frame(const Tensor& thermal, const std::vector<Detection>& dets,
                    const std::string& path);

}  // namespace utm
