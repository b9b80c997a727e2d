#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "utm/bfe.hpp"
#include "utm/checkpoint.hpp"
#include "utm/config.hpp"
#include "utm/fusion.hpp"
#include "utm/geometry.hpp"
#include "utm/mdn.hpp"

namespace utm {

/// Full detector: dual-branch extractor, fusion stage, multiscale heads.
/// The sod strategy runs the main branch alone on a composed pseudo-RGB
/// input, so its aux branch is built empty and owns no parameters.
struct UtmModel {
  FusionStrategy strategy = FusionStrategy::kUgf;
  BfeModel bfe;
  std::optional<AmParams> am;  // attention-fusion convs, am strategy only
  MdnModel mdn;
  AnchorSet anchors;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

UtmModel build_model(FusionStrategy strategy, const BfeConfig& bfe_cfg,
                     const AnchorSet& anchors, Rng& rng);

/// Network-ready views of one frame's sensor data.
struct NetInput {
  Tensor thermal1, radar1;  // [1,H,W]; radar depth clipped/scaled to [0,1]
  Tensor thermal3, radar3;  // [3,H,W] branch inputs
};

NetInput prepare_input(const Tensor& thermal,
                       const std::vector<RadarPoint>& cloud,
                       const SensorRig& rig);

struct ForwardResult {
  std::array<Tensor, 3> raw;  // per-scale head outputs
  FusedFeature fused;
};

/// One end-to-end forward pass. Monte-Carlo sampling happens inside the
/// extractor; rng advances once per stochastic pass. Spatial dims must be
/// divisible by 32 so every head lands on an integer grid.
ForwardResult model_forward(const UtmModel& model, const NetInput& input,
                            Rng& rng, bool keep_weights = false);

/// Rebuild a model from a checkpoint's config echo and parameter blobs.
struct LoadedModel {
  UtmModel model;
  RunConfig cfg;
};
LoadedModel model_from_checkpoint(const Checkpoint& ck);

/// Snapshot of the trainable state, named and cast to f32.
std::vector<std::pair<std::string, std::vector<float>>> snapshot_parameters(
    const UtmModel& model);

}  // namespace utm
