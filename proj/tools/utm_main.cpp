// Command-line front end: dataset generation, training, evaluation,
// ablation sweeps, single-frame inference and strategy comparison.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "utm/pipeline.hpp"

namespace {

utm::RunConfig resolve_run_config(const std::string& config_path,
                                  const std::vector<std::string>& overrides) {
  utm::RunConfig cfg = config_path.empty() ? utm::RunConfig{}
                                           : utm::load_config(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override must be key=value: '" + kv + "'");
    std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    auto trim = [](std::string& s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.erase(s.begin());
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
    };
    trim(key);
    trim(value);
    utm::apply_override(cfg, key, value);
  }
  return cfg;
}

std::vector<std::set<int>> parse_layer_grid(const std::string& text) {
  std::vector<std::set<int>> grid;
  std::string group;
  auto flush = [&] {
    std::set<int> layers;
    std::string tok;
    auto push_tok = [&] {
      if (!tok.empty()) layers.insert(std::stoi(tok));
      tok.clear();
    };
    for (char c : group) {
      if (c == ',')
        push_tok();
      else if (c != ' ')
        tok.push_back(c);
    }
    push_tok();
    grid.push_back(layers);
    group.clear();
  };
  for (char c : text) {
    if (c == '|')
      flush();
    else
      group.push_back(c);
  }
  if (!group.empty()) flush();
  return grid;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& text, Parse parse) {
  std::vector<T> out;
  std::string tok;
  for (char c : text) {
    if (c == ',') {
      if (!tok.empty()) out.push_back(parse(tok));
      tok.clear();
    } else if (c != ' ') {
      tok.push_back(c);
    }
  }
  if (!tok.empty()) out.push_back(parse(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uncertainty-guided thermal/radar human detection"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out;
  int gen_train = 500, gen_val = 100, gen_test = 100;
  utm::SceneGenConfig scene;
  bool no_clutter = false;
  gen->add_option("--out", gen_out, "dataset directory")->required();
  gen->add_option("--train", gen_train, "training frames");
  gen->add_option("--val", gen_val, "validation frames");
  gen->add_option("--test", gen_test, "test frames");
  gen->add_option("--width", scene.width, "image width");
  gen->add_option("--height", scene.height, "image height");
  gen->add_option("--seed", scene.seed, "generator seed");
  double gen_focal = 0;
  gen->add_option("--focal", gen_focal,
                  "focal length in pixels (default scales with height)");
  gen->add_option("--contrast", scene.contrast, "body brightness above background");
  gen->add_option("--noise", scene.noise_sigma, "thermal pixel noise sigma");
  gen->add_flag("--no-clutter", no_clutter,
                "disable radar clutter and hot distractors");

  // train
  auto* train = app.add_subcommand("train", "train a detector");
  std::string train_config;
  std::vector<std::string> train_sets;
  int overfit_steps = 0;
  train->add_option("--config", train_config, "run config file");
  train->add_option("--set", train_sets, "override, key=value (repeatable)");
  train->add_option("--overfit-steps", overfit_steps,
                    "memorization mode: SGD steps on one training frame");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_dataset, eval_out;
  utm::EvalOptions eopts;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--dataset", eval_dataset, "dataset directory")->required();
  eval->add_option("--out", eval_out, "report directory (default: checkpoint's directory)");
  eval->add_option("--split", eopts.split, "train|val|test");
  eval->add_option("--nms-iou", eopts.nms_iou, "NMS IoU threshold");
  eval->add_option("--conf", eopts.conf_threshold, "decode confidence threshold");
  eval->add_option("--passes", eopts.passes, "override MC forward passes");
  eval->add_option("--seed", eopts.seed, "override sampling seed");
  eval->add_flag("--sweep", eopts.sweep, "also sweep NMS thresholds 0.30..0.90");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "dropout ablation sweep");
  std::string ab_config, ab_layers, ab_p, ab_passes;
  std::vector<std::string> ab_sets;
  ablate->add_option("--config", ab_config, "run config file");
  ablate->add_option("--set", ab_sets, "override, key=value (repeatable)");
  ablate->add_option("--layer-grid", ab_layers,
                     "dropout layer sets, e.g. '5|4,5|3,4,5'");
  ablate->add_option("--p-grid", ab_p, "dropout rates, e.g. '0.05,0.10'");
  ablate->add_option("--passes-grid", ab_passes, "MC pass counts, e.g. '3,5'");

  // infer
  auto* infer = app.add_subcommand("infer", "detect on raw frame files");
  std::string in_ckpt, in_calib, in_out = ".";
  std::vector<std::string> in_thermal, in_radar;
  double in_conf = 0.25, in_nms = 0.6;
  bool in_annotate = false;
  infer->add_option("--checkpoint", in_ckpt, "checkpoint file")->required();
  infer->add_option("--calib", in_calib, "calibration file")->required();
  infer->add_option("--thermal", in_thermal, "thermal PGM (repeatable)")
      ->required();
  infer->add_option("--radar", in_radar, "radar CSV (repeatable)")->required();
  infer->add_option("--conf", in_conf, "confidence threshold");
  infer->add_option("--nms-iou", in_nms, "NMS IoU threshold");
  infer->add_option("--out", in_out, "output directory");
  infer->add_flag("--annotate", in_annotate, "write annotated PGM per frame");

  // compare
  auto* compare = app.add_subcommand("compare", "train + evaluate all fusion strategies");
  std::string cmp_config;
  std::vector<std::string> cmp_sets;
  compare->add_option("--config", cmp_config, "run config file");
  compare->add_option("--set", cmp_sets, "override, key=value (repeatable)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      if (no_clutter) {
        scene.clutter_points = 0;
        scene.max_distractors = 0;
      }
      const int total = gen_train + gen_val + gen_test;
      utm::check_arg(gen_train > 0 && gen_val >= 0 && gen_test >= 0,
                     "gen-data: bad split sizes");
      if (gen_focal <= 0) gen_focal = 0.9375 * scene.height;
      scene.fx = gen_focal;
      scene.fy = gen_focal;
      const utm::Dataset ds = utm::generate_dataset(
          scene, total, double(gen_train) / total, double(gen_val) / total);
      utm::write_dataset(ds, gen_out);
      std::cout << "wrote " << ds.frames.size() << " frames to " << gen_out
                << " (train " << ds.train_ids.size() << ", val "
                << ds.val_ids.size() << ", test " << ds.test_ids.size()
                << ")\n";
    } else if (train->parsed()) {
      const utm::RunConfig cfg = resolve_run_config(train_config, train_sets);
      if (overfit_steps > 0) {
        const auto losses = utm::overfit_one_frame(cfg, overfit_steps);
        std::cout << "overfit: " << losses.size() << " steps, final loss "
                  << losses.back() << "\n";
      } else {
        const utm::TrainResult res = utm::train_run(cfg, &std::cout);
        std::cout << "best epoch " << res.best_epoch << " val mAP_50:95 "
                  << res.best_val_map << " -> " << res.checkpoint_path << "\n";
      }
    } else if (eval->parsed()) {
      if (eval_out.empty())
        eval_out = std::filesystem::path(eval_ckpt).parent_path().string();
      if (eval_out.empty()) eval_out = ".";
      const utm::EvalRun run =
          utm::evaluate_checkpoint(eval_ckpt, eval_dataset, eopts, eval_out);
      std::cout << utm::format_report(run.report);
      if (eopts.sweep) std::cout << "\n" << utm::format_sweep_table(run.sweep);
      std::cout << "reports written to " << eval_out << "\n";
    } else if (ablate->parsed()) {
      const utm::RunConfig cfg = resolve_run_config(ab_config, ab_sets);
      const auto layer_grid = ab_layers.empty()
                                  ? std::vector<std::set<int>>{cfg.bfe.dropout_layers}
                                  : parse_layer_grid(ab_layers);
      const auto p_grid =
          ab_p.empty() ? std::vector<double>{double(cfg.bfe.dropout_rate)}
                       : parse_list<double>(ab_p, [](const std::string& s) {
                           return std::stod(s);
                         });
      const auto passes_grid =
          ab_passes.empty() ? std::vector<int>{cfg.bfe.forward_passes}
                            : parse_list<int>(ab_passes, [](const std::string& s) {
                                return std::stoi(s);
                              });
      const auto cells =
          utm::ablate_run(cfg, layer_grid, p_grid, passes_grid, &std::cout);
      std::cout << utm::format_cell_table(cells);
      if (p_grid.size() == 1 && passes_grid.size() == 1)
        std::cout << "\n" << utm::format_layer_table(cells, cfg.bfe.blocks());
      if (layer_grid.size() == 1 && passes_grid.size() == 1)
        std::cout << "\n" << utm::format_p_table(cells);
    } else if (infer->parsed()) {
      const utm::InferResult res = utm::infer_files(
          in_ckpt, in_calib, in_thermal, in_radar, in_conf, in_nms, in_out,
          in_annotate);
      for (std::size_t i = 0; i < res.stems.size(); ++i)
        std::cout << res.stems[i] << ": " << res.detections[i].size()
                  << " detections\n";
    } else if (compare->parsed()) {
      const utm::RunConfig cfg = resolve_run_config(cmp_config, cmp_sets);
      const auto rows = utm::compare_strategies(cfg, &std::cout);
      std::cout << utm::format_compare_table(rows);
    }
  } catch (const utm::ShapeError& e) {
    std::cerr << "ERROR shape: " << e.what() << "\n";
    return 2;
  } catch (const utm::IoError& e) {
    std::cerr << "ERROR io: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "ERROR config: " << e.what() << "\n";
    return 4;
  } catch (const utm::TrainError& e) {
    std::cerr << "ERROR train: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "ERROR internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
