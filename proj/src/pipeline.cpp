#include "utm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "utm/ops.hpp"
#include "utm/sgd.hpp"

namespace fs = std::filesystem;

namespace utm {

namespace {

// Stream tags for deriving independent RNGs from one run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kDropoutStream = 2;
constexpr std::uint64_t kShuffleStream = 3;
constexpr std::uint64_t kEvalStream = 4;

double now_seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::vector<BBox> collect_train_boxes(const Dataset& ds) {
  std::vector<BBox> boxes;
  for (int id : ds.train_ids) {
    const auto& gt = ds.frame_by_id(id).gt_boxes;
    boxes.insert(boxes.end(), gt.begin(), gt.end());
  }
  return boxes;
}

/// Anchors pinned, auto flag cleared: the form that goes into artifacts.
RunConfig resolve_config(const RunConfig& cfg_in, const Dataset& ds) {
  RunConfig cfg = cfg_in;
  if (cfg.auto_anchors) {
    cfg.anchors = AnchorSet::from_boxes(collect_train_boxes(ds));
    cfg.auto_anchors = false;
  }
  return cfg;
}

Checkpoint make_checkpoint(const UtmModel& model, const Sgd& sgd,
                           const std::string& config_echo, int epoch,
                           double best_metric) {
  Checkpoint ck;
  ck.config_text = config_echo;
  ck.params = snapshot_parameters(model);
  const auto& vel = sgd.velocity();
  check_state(vel.size() == ck.params.size(),
              "optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < vel.size(); ++i) {
    std::vector<float> values(vel[i].size());
    for (std::size_t j = 0; j < values.size(); ++j)
      values[j] = float(vel[i][j]);
    ck.velocity.emplace_back(ck.params[i].first, std::move(values));
  }
  ck.epoch = std::uint32_t(epoch);
  ck.best_metric = best_metric;
  return ck;
}

const std::vector<int>& split_ids(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train_ids;
  if (split == "val") return ds.val_ids;
  if (split == "test") return ds.test_ids;
  throw std::invalid_argument("unknown split: " + split);
}

double metric_at(const EvalReport& r, const std::vector<double>& values,
                 double threshold) {
  for (std::size_t i = 0; i < r.iou_thresholds.size(); ++i)
    if (std::abs(r.iou_thresholds[i] - threshold) < 1e-9) return values[i];
  throw std::invalid_argument("threshold not in the evaluation grid");
}

std::string layer_label(const std::set<int>& layers) {
  std::string out = "{";
  for (int l : layers) {
    if (out.size() > 1) out += ",";
    out += std::to_string(l);
  }
  return out + "}";
}

}  // namespace

std::string format_epoch_record(const EpochRecord& r) {
  char buf[192];
  std::snprintf(buf, sizeof(buf),
                "epoch=%d lr=%.8f train_loss=%.6f val_map_50_95=%.6f "
                "val_mmf1_50_95=%.6f wall_time=%.3f",
                r.epoch, r.lr, r.train_loss, r.val_map_50_95,
                r.val_mmf1_50_95, r.wall_time);
  return buf;
}

TrainResult train_run(const RunConfig& cfg_in, std::ostream* progress) {
  cfg_in.validate();
  check_arg(!cfg_in.dataset_dir.empty(), "train: dataset_dir is empty");
  check_arg(!cfg_in.output_dir.empty(), "train: output_dir is empty");

  const Dataset ds = load_dataset(cfg_in.dataset_dir);
  check_arg(!ds.train_ids.empty(), "train: dataset has no training frames");
  check_arg(!ds.val_ids.empty(), "train: dataset has no validation frames");

  const RunConfig cfg = resolve_config(cfg_in, ds);
  fs::create_directories(cfg.output_dir);
  write_config(cfg, (fs::path(cfg.output_dir) / "resolved.cfg").string());
  const std::string echo = serialize_config(cfg, false);

  const Rng root = Rng::seeded(cfg.seed);
  Rng rng_init = root.split(kInitStream);
  Rng rng_drop = root.split(kDropoutStream);
  UtmModel model = build_model(cfg.strategy, cfg.bfe, cfg.anchors, rng_init);

  const auto named = model.named_parameters();
  std::vector<Tensor> params;
  for (const auto& [name, t] : named) params.push_back(t);
  Sgd sgd(params);
  SgdConfig scfg = cfg.sgd;
  scfg.total_epochs = cfg.epochs;

  const std::string log_path =
      (fs::path(cfg.output_dir) / "train_log.txt").string();
  std::ofstream log(log_path);
  if (!log) throw IoError("cannot write " + log_path);

  TrainResult res;
  res.anchors = cfg.anchors;
  res.checkpoint_path = (fs::path(cfg.output_dir) / "best.ckpt").string();
  const MdnConfig mdn_cfg;
  const auto t0 = std::chrono::steady_clock::now();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = ds.train_ids;
    Rng shuffle_rng = root.split(kShuffleStream).split(std::uint64_t(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[std::size_t(shuffle_rng.uniform_int(0, int(i) - 1))]);

    double loss_sum = 0;
    for (std::size_t start = 0, batch_id = 0; start < order.size();
         start += std::size_t(cfg.batch_size), ++batch_id) {
      const std::size_t n =
          std::min(order.size() - start, std::size_t(cfg.batch_size));
      double batch_loss = 0;
      for (std::size_t i = start; i < start + n; ++i) {
        const SceneFrame& frame = ds.frame_by_id(order[i]);
        const NetInput input =
            prepare_input(frame.thermal, frame.radar_cloud, ds.rig);
        const ForwardResult fwd = model_forward(model, input, rng_drop);
        const Tensor loss =
            detection_loss(fwd.raw, frame.gt_boxes, model.anchors, mdn_cfg);
        batch_loss += double(loss.values()[0]);
        mul_scalar(loss, real(1.0 / double(n))).backward();
      }
      if (!std::isfinite(batch_loss)) {
        const std::string dump_path =
            (fs::path(cfg.output_dir) / "diverged.txt").string();
        std::ofstream dump(dump_path);
        dump << "non-finite loss at epoch " << epoch << " batch " << batch_id
             << "\nframes:";
        for (std::size_t i = start; i < start + n; ++i)
          dump << " " << frame_name(order[i]);
        dump << "\n";
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch) +
                         " batch " + std::to_string(batch_id) +
                         " (details: " + dump_path + ")");
      }
      sgd.step(scfg, epoch);
      loss_sum += batch_loss;
    }

    EvalOptions vopts;
    vopts.split = "val";
    const EvalRun val = evaluate_split(model, cfg, ds, ds.val_ids, vopts);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = double(lr_schedule(scfg, epoch));
    rec.train_loss = loss_sum / double(ds.train_ids.size());
    rec.val_map_50_95 = val.report.map_50_95;
    rec.val_mmf1_50_95 = val.report.mmf1_50_95;
    rec.wall_time = now_seconds(t0);
    log << format_epoch_record(rec) << "\n" << std::flush;
    if (progress) (*progress) << format_epoch_record(rec) << "\n";
    res.log.push_back(rec);

    if (res.best_epoch < 0 || rec.val_map_50_95 > res.best_val_map) {
      res.best_epoch = epoch;
      res.best_val_map = rec.val_map_50_95;
      save_checkpoint(
          make_checkpoint(model, sgd, echo, epoch, rec.val_map_50_95),
          res.checkpoint_path);
    }
  }
  return res;
}

std::vector<double> overfit_one_frame(const RunConfig& cfg_in, int steps,
                                      double stop_below) {
  cfg_in.validate();
  check_arg(steps >= 1, "overfit: steps must be >= 1");
  check_arg(!cfg_in.dataset_dir.empty(), "overfit: dataset_dir is empty");
  check_arg(!cfg_in.output_dir.empty(), "overfit: output_dir is empty");

  const Dataset ds = load_dataset(cfg_in.dataset_dir);
  check_arg(!ds.train_ids.empty(), "overfit: dataset has no training frames");
  RunConfig cfg = resolve_config(cfg_in, ds);
  // Memorization diagnostic: regularizers off, plain constant step size.
  // This checks the loss/optimizer wiring, not the training recipe.
  cfg.bfe.dropout_rate = 0;
  cfg.sgd.weight_decay = 0;
  cfg.sgd.learning_rate_initial = real(0.05);
  fs::create_directories(cfg.output_dir);

  const Rng root = Rng::seeded(cfg.seed);
  Rng rng_init = root.split(kInitStream);
  Rng rng_drop = root.split(kDropoutStream);
  UtmModel model = build_model(cfg.strategy, cfg.bfe, cfg.anchors, rng_init);

  const auto named = model.named_parameters();
  std::vector<Tensor> params;
  for (const auto& [name, t] : named) params.push_back(t);
  Sgd sgd(params);
  SgdConfig scfg = cfg.sgd;
  scfg.total_epochs = steps;  // epoch stays 0: constant learning rate

  const SceneFrame& frame = ds.frame_by_id(ds.train_ids.front());
  const NetInput input =
      prepare_input(frame.thermal, frame.radar_cloud, ds.rig);
  const MdnConfig mdn_cfg;

  const std::string log_path =
      (fs::path(cfg.output_dir) / "overfit_log.txt").string();
  std::ofstream log(log_path);
  if (!log) throw IoError("cannot write " + log_path);

  std::vector<double> losses;
  for (int step = 0; step < steps; ++step) {
    const ForwardResult fwd = model_forward(model, input, rng_drop);
    const Tensor loss =
        detection_loss(fwd.raw, frame.gt_boxes, model.anchors, mdn_cfg);
    const double v = double(loss.values()[0]);
    if (!std::isfinite(v))
      throw TrainError("non-finite loss at overfit step " +
                       std::to_string(step));
    loss.backward();
    sgd.step(scfg, 0);
    losses.push_back(v);
    log << "step=" << step << " loss=" << v << "\n";
    if (stop_below > 0 && v < stop_below) break;
  }
  save_checkpoint(make_checkpoint(model, sgd, serialize_config(cfg, false), 0,
                                  losses.back()),
                  (fs::path(cfg.output_dir) / "overfit.ckpt").string());
  return losses;
}

EvalRun evaluate_split(const UtmModel& model_in, const RunConfig& cfg,
                       const Dataset& ds, const std::vector<int>& ids,
                       const EvalOptions& opts) {
  const double conf =
      opts.conf_threshold >= 0 ? opts.conf_threshold : cfg.conf_threshold;
  const double nms_thr = opts.nms_iou >= 0 ? opts.nms_iou : cfg.nms_iou;
  const std::uint64_t seed = opts.seed ? opts.seed : cfg.seed;
  check_arg(conf >= 0 && conf < 1, "evaluate: conf_threshold not in [0,1)");
  check_arg(nms_thr > 0 && nms_thr < 1, "evaluate: nms_iou not in (0,1)");

  UtmModel model = model_in;  // parameters stay shared
  if (opts.passes > 0) model.bfe.cfg.forward_passes = opts.passes;

  const Rng eval_root = Rng::seeded(seed).split(kEvalStream);
  std::vector<std::vector<Detection>> raw_dets;
  std::vector<std::vector<BBox>> gts;
  EvalRun run;
  for (int id : ids) {
    const SceneFrame& frame = ds.frame_by_id(id);
    Rng frng = eval_root.split(std::uint64_t(id));
    const NetInput input =
        prepare_input(frame.thermal, frame.radar_cloud, ds.rig);
    NoGradGuard inference;
    const ForwardResult fwd = model_forward(model, input, frng);
    raw_dets.push_back(decode_boxes(fwd.raw, model.anchors, conf));
    gts.push_back(frame.gt_boxes);
    run.frame_names.push_back(frame_name(id));
  }

  run.report = evaluate(raw_dets, gts, nms_thr);
  for (const auto& dets : raw_dets) run.detections.push_back(nms(dets, nms_thr));
  if (opts.sweep) {
    for (int i = 0; i <= 12; ++i) {
      const double thr = double(30 + 5 * i) / 100.0;
      run.sweep.emplace_back(thr, evaluate(raw_dets, gts, thr));
    }
  }
  return run;
}

EvalRun evaluate_checkpoint(const std::string& checkpoint_path,
                            const std::string& dataset_dir,
                            const EvalOptions& opts,
                            const std::string& out_dir) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const LoadedModel lm = model_from_checkpoint(ck);
  const Dataset ds = load_dataset(dataset_dir);
  const std::vector<int>& ids = split_ids(ds, opts.split);
  check_arg(!ids.empty(), "evaluate: split '" + opts.split + "' is empty");

  const EvalRun run = evaluate_split(lm.model, lm.cfg, ds, ids, opts);
  if (!out_dir.empty()) {
    fs::create_directories(fs::path(out_dir) / "detections");
    std::ofstream rep((fs::path(out_dir) / "report.txt").string());
    if (!rep) throw IoError("cannot write report.txt in " + out_dir);
    rep << format_report(run.report);
    write_report_kv(run.report,
                    (fs::path(out_dir) / "report_kv.txt").string());
    write_pr_curves(run.report,
                    (fs::path(out_dir) / "pr_curves.txt").string());
    for (std::size_t i = 0; i < run.detections.size(); ++i)
      write_detections(run.detections[i],
                       (fs::path(out_dir) / "detections" /
                        (run.frame_names[i] + ".txt"))
                           .string());
    if (opts.sweep) {
      std::ofstream sw((fs::path(out_dir) / "nms_sweep.txt").string());
      if (!sw) throw IoError("cannot write nms_sweep.txt in " + out_dir);
      sw << format_sweep_table(run.sweep);
    }
  }
  return run;
}

std::string format_sweep_table(
    const std::vector<std::pair<double, EvalReport>>& sweep) {
  std::string out = "  nms_iou   mAP_50:95   mmF1_50:95\n";
  char buf[64];
  for (const auto& [thr, report] : sweep) {
    std::snprintf(buf, sizeof(buf), "     %4.2f    %8.4f     %8.4f\n", thr,
                  report.map_50_95, report.mmf1_50_95);
    out += buf;
  }
  return out;
}

std::vector<AblationCell> ablate_run(const RunConfig& cfg,
                                     const std::vector<std::set<int>>& layer_grid,
                                     const std::vector<double>& p_grid,
                                     const std::vector<int>& passes_grid,
                                     std::ostream* progress) {
  if (layer_grid.empty() || p_grid.empty() || passes_grid.empty())
    throw std::invalid_argument("empty ablation grid");
  check_arg(!cfg.output_dir.empty(), "ablate: output_dir is empty");

  std::vector<AblationCell> cells;
  for (const auto& layers : layer_grid)
    for (double p : p_grid)
      for (int passes : passes_grid) {
        RunConfig c = cfg;
        c.bfe.dropout_layers = layers;
        c.bfe.dropout_rate = real(p);
        c.bfe.forward_passes = passes;

        char tag[64];
        std::string joined;
        for (int l : layers) joined += std::to_string(l);
        std::snprintf(tag, sizeof(tag), "l%s_p%.4g_n%d",
                      joined.empty() ? "none" : joined.c_str(), p, passes);
        c.output_dir = (fs::path(cfg.output_dir) / tag).string();
        c.validate();

        if (progress)
          (*progress) << "ablate cell layers=" << layer_label(layers)
                      << " p=" << p << " passes=" << passes << "\n";
        const TrainResult tr = train_run(c, progress);
        EvalOptions eopts;
        eopts.split = "test";
        const EvalRun run = evaluate_checkpoint(
            tr.checkpoint_path, c.dataset_dir, eopts, c.output_dir);

        AblationCell cell;
        cell.layers = layers;
        cell.p = p;
        cell.passes = passes;
        cell.map_50_95 = run.report.map_50_95;
        cell.mmf1_50_95 = run.report.mmf1_50_95;
        cells.push_back(cell);
      }

  std::string tables = format_cell_table(cells);
  if (p_grid.size() == 1 && passes_grid.size() == 1)
    tables += "\n" + format_layer_table(cells, cfg.bfe.blocks());
  if (layer_grid.size() == 1 && passes_grid.size() == 1)
    tables += "\n" + format_p_table(cells);
  fs::create_directories(cfg.output_dir);
  const std::string path =
      (fs::path(cfg.output_dir) / "ablation.txt").string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << tables;
  return cells;
}

std::string format_layer_table(const std::vector<AblationCell>& cells,
                               int blocks) {
  std::string out = "  dropout blocks    ";
  char buf[96];
  for (int b = 1; b <= blocks; ++b) {
    std::snprintf(buf, sizeof(buf), "%3d", b);
    out += buf;
  }
  out += "     mAP_50:95    mmF1_50:95\n";
  for (const auto& cell : cells) {
    std::snprintf(buf, sizeof(buf), "  %-18s", layer_label(cell.layers).c_str());
    out += buf;
    for (int b = 1; b <= blocks; ++b)
      out += cell.layers.count(b) ? "  x" : "  .";
    std::snprintf(buf, sizeof(buf), "      %8.4f      %8.4f\n",
                  cell.map_50_95, cell.mmf1_50_95);
    out += buf;
  }
  return out;
}

std::string format_p_table(const std::vector<AblationCell>& cells) {
  std::string header = "            ";
  std::string map_row = "  mAP_50:95 ";
  std::string mf1_row = "  mmF1_50:95";
  char buf[32];
  for (const auto& cell : cells) {
    std::snprintf(buf, sizeof(buf), "    p=%-4.4g", cell.p);
    header += buf;
    std::snprintf(buf, sizeof(buf), "    %6.4f", cell.map_50_95);
    map_row += buf;
    std::snprintf(buf, sizeof(buf), "    %6.4f", cell.mmf1_50_95);
    mf1_row += buf;
  }
  return header + "\n" + map_row + "\n" + mf1_row + "\n";
}

std::string format_cell_table(const std::vector<AblationCell>& cells) {
  std::string out;
  char buf[160];
  for (const auto& cell : cells) {
    std::snprintf(buf, sizeof(buf),
                  "layers=%s p=%.4g passes=%d map_50_95=%.6f mmf1_50_95=%.6f\n",
                  layer_label(cell.layers).c_str(), cell.p, cell.passes,
                  cell.map_50_95, cell.mmf1_50_95);
    out += buf;
  }
  return out;
}

std::vector<CompareRow> compare_strategies(const RunConfig& cfg,
                                           std::ostream* progress) {
  check_arg(!cfg.output_dir.empty(), "compare: output_dir is empty");
  const FusionStrategy all[] = {FusionStrategy::kUgf, FusionStrategy::kVa,
                                FusionStrategy::kAm, FusionStrategy::kSod};
  std::vector<CompareRow> rows;
  for (FusionStrategy s : all) {
    RunConfig c = cfg;
    c.strategy = s;
    c.output_dir = (fs::path(cfg.output_dir) / strategy_name(s)).string();
    if (progress) (*progress) << "compare: training " << strategy_name(s) << "\n";
    const TrainResult tr = train_run(c, progress);
    EvalOptions eopts;
    eopts.split = "test";
    const EvalRun run = evaluate_checkpoint(tr.checkpoint_path, c.dataset_dir,
                                            eopts, c.output_dir);
    rows.push_back({s, run.report});
  }
  fs::create_directories(cfg.output_dir);
  const std::string path = (fs::path(cfg.output_dir) / "compare.txt").string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << format_compare_table(rows);
  return rows;
}

std::string format_compare_table(const std::vector<CompareRow>& rows) {
  std::string out =
      "  method    AP_50   AP_65   AP_80   AP_95   mAP_50:95   "
      "mF1_50  mF1_65  mF1_80  mF1_95   mmF1_50:95\n";
  char buf[192];
  const double marks[] = {0.50, 0.65, 0.80, 0.95};
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "  %-7s", strategy_name(row.strategy).c_str());
    out += buf;
    for (double t : marks) {
      std::snprintf(buf, sizeof(buf), " %7.4f", row.report.ap_at(t));
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), "   %7.4f ", row.report.map_50_95);
    out += buf;
    for (double t : marks) {
      std::snprintf(buf, sizeof(buf), " %7.4f",
                    metric_at(row.report, row.report.mf1, t));
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), "    %7.4f\n", row.report.mmf1_50_95);
    out += buf;
  }
  return out;
}

InferResult infer_files(const std::string& checkpoint_path,
                        const std::string& calib_path,
                        const std::vector<std::string>& thermal_paths,
                        const std::vector<std::string>& radar_paths,
                        double conf_threshold, double nms_iou,
                        const std::string& out_dir, bool annotate) {
  check_arg(!thermal_paths.empty() &&
                thermal_paths.size() == radar_paths.size(),
            "infer: need matching thermal/radar file lists");
  check_arg(conf_threshold >= 0 && conf_threshold < 1,
            "infer: conf_threshold not in [0,1)");
  check_arg(nms_iou > 0 && nms_iou < 1, "infer: nms_iou not in (0,1)");

  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const LoadedModel lm = model_from_checkpoint(ck);
  const SensorRig rig = load_calibration(calib_path);
  fs::create_directories(out_dir.empty() ? "." : out_dir);

  const Rng infer_root = Rng::seeded(lm.cfg.seed).split(kEvalStream);
  InferResult res;
  for (std::size_t i = 0; i < thermal_paths.size(); ++i) {
    const Tensor thermal = read_pgm16(thermal_paths[i]);
    const std::vector<RadarPoint> cloud = read_radar_csv(radar_paths[i]);
    const NetInput input = prepare_input(thermal, cloud, rig);
    Rng frng = infer_root.split(i);
    NoGradGuard inference;
    const ForwardResult fwd = model_forward(lm.model, input, frng);
    const std::vector<Detection> kept =
        nms(decode_boxes(fwd.raw, lm.model.anchors, conf_threshold), nms_iou);

    std::string stem = fs::path(thermal_paths[i]).filename().string();
    auto strip = [&](const std::string& suffix) {
      if (stem.size() > suffix.size() &&
          stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0)
        stem.resize(stem.size() - suffix.size());
    };
    strip(".pgm");
    strip(".thermal");

    const fs::path base = fs::path(out_dir.empty() ? "." : out_dir) / stem;
    write_detections(kept, base.string() + ".det.txt");
    if (annotate) annotate_frame(thermal, kept, base.string() + ".annotated.pgm");
    res.stems.push_back(stem);
    res.detections.push_back(kept);
  }
  return res;
}

void annotate_frame(const Tensor& thermal, const std::vector<Detection>& dets,
                    const std::string& path) {
  check_shape(thermal.shape().size() == 3 && thermal.dim(0) == 1,
              "annotate_frame: thermal must be [1,H,W]");
  const int h = thermal.dim(1), w = thermal.dim(2);
  std::vector<real> px = thermal.values();
  auto clampi = [](double v, int hi) {
    return std::min(hi, std::max(0, int(std::lround(v))));
  };
  for (const auto& det : dets) {
    const int x0 = clampi(det.box.x_min, w - 1), x1 = clampi(det.box.x_max, w - 1);
    const int y0 = clampi(det.box.y_min, h - 1), y1 = clampi(det.box.y_max, h - 1);
    for (int x = x0; x <= x1; ++x) {
      px[std::size_t(y0) * w + x] = real(1);
      px[std::size_t(y1) * w + x] = real(1);
    }
    for (int y = y0; y <= y1; ++y) {
      px[std::size_t(y) * w + x0] = real(1);
      px[std::size_t(y) * w + x1] = real(1);
    }
  }
  write_pgm16(Tensor::from_values({1, h, w}, std::move(px)), path);
}

}  // namespace utm
