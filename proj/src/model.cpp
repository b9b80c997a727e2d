#include "utm/model.hpp"

#include <algorithm>
#include <unordered_map>

#include "utm/ops.hpp"

namespace utm {

std::vector<std::pair<std::string, Tensor>> UtmModel::named_parameters()
    const {
  auto out = bfe.named_parameters();
  if (am) {
    auto extra = am->named_parameters();
    out.insert(out.end(), extra.begin(), extra.end());
  }
  auto heads = mdn.named_parameters();
  out.insert(out.end(), heads.begin(), heads.end());
  return out;
}

std::vector<Tensor> UtmModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

UtmModel build_model(FusionStrategy strategy, const BfeConfig& bfe_cfg,
                     const AnchorSet& anchors, Rng& rng) {
  bfe_cfg.validate();
  anchors.validate();
  UtmModel m;
  m.strategy = strategy;
  m.bfe = build_bfe(bfe_cfg, rng);
  if (strategy == FusionStrategy::kSod) m.bfe.aux.blocks.clear();
  if (strategy == FusionStrategy::kAm)
    m.am = AmParams::make(bfe_cfg.channels.back(), rng);
  m.mdn = build_mdn(rng);
  m.anchors = anchors;
  return m;
}

NetInput prepare_input(const Tensor& thermal,
                       const std::vector<RadarPoint>& cloud,
                       const SensorRig& rig) {
  check_shape(thermal.shape().size() == 3 && thermal.dim(0) == 1,
              "prepare_input: thermal must be [1,H,W]");
  check_shape(thermal.dim(1) == rig.height && thermal.dim(2) == rig.width,
              "prepare_input: thermal frame does not match calibration dims");
  NetInput in;
  in.thermal1 = thermal;
  in.thermal3 = concat_channels({thermal, thermal, thermal});

  const DepthImage depth = project_cloud(cloud, rig);
  in.radar3 = depth_network_input(depth, rig.max_range_m);

  const auto& dv = depth.values();
  std::vector<real> scaled(dv.size());
  for (std::size_t i = 0; i < dv.size(); ++i) {
    const double d = std::clamp(double(dv[i]), 0.0, rig.max_range_m);
    scaled[i] = real(d / rig.max_range_m);
  }
  in.radar1 = Tensor::from_values(depth.shape(), std::move(scaled));
  return in;
}

ForwardResult model_forward(const UtmModel& model, const NetInput& input,
                            Rng& rng, bool keep_weights) {
  const int h = input.thermal1.dim(1), w = input.thermal1.dim(2);
  check_shape(h % 32 == 0 && w % 32 == 0,
              "image size " + std::to_string(w) + "x" + std::to_string(h) +
                  " not divisible by 32");

  ForwardResult out;
  if (model.strategy == FusionStrategy::kSod) {
    BfeConfig mono = model.bfe.cfg;
    mono.forward_passes = 1;
    const Tensor composed = sod_compose(input.thermal1, input.radar1);
    const FeatureStack stack =
        branch_forward(model.bfe.main, composed, mono, rng, "mono");
    out.fused.map = stack.samples[0];
  } else {
    auto [fm, fa] = bfe_forward(model.bfe, input.thermal3, input.radar3, rng);
    switch (model.strategy) {
      case FusionStrategy::kUgf:
        out.fused = ugf_fuse(fm, fa, keep_weights);
        break;
      case FusionStrategy::kVa:
        out.fused = va_fuse(fm, fa);
        break;
      case FusionStrategy::kAm:
        check_state(model.am.has_value(),
                    "am strategy without fusion parameters");
        out.fused = am_fuse(fm, fa, *model.am);
        break;
      default:
        check_state(false, "unreachable fusion strategy");
    }
  }
  out.raw = mdn_forward(model.mdn, out.fused.map);
  return out;
}

LoadedModel model_from_checkpoint(const Checkpoint& ck) {
  LoadedModel lm;
  lm.cfg = parse_config(ck.config_text);
  lm.cfg.validate();
  Rng rng = Rng::seeded(lm.cfg.seed).split(1);
  lm.model =
      build_model(lm.cfg.strategy, lm.cfg.bfe, lm.cfg.anchors, rng);

  auto named = lm.model.named_parameters();
  std::unordered_map<std::string, Tensor*> lookup;
  for (auto& [name, t] : named) lookup[name] = &t;
  if (ck.params.size() != named.size())
    throw IoError("checkpoint parameter set does not match the model (" +
                  std::to_string(ck.params.size()) + " vs " +
                  std::to_string(named.size()) + " tensors)");
  for (const auto& [name, blob] : ck.params) {
    auto it = lookup.find(name);
    if (it == lookup.end())
      throw IoError("checkpoint parameter not in model: " + name);
    auto& values = it->second->values();
    if (values.size() != blob.size())
      throw IoError("checkpoint parameter " + name + " has " +
                    std::to_string(blob.size()) + " values, model expects " +
                    std::to_string(values.size()));
    for (std::size_t i = 0; i < blob.size(); ++i) values[i] = real(blob[i]);
  }
  return lm;
}

std::vector<std::pair<std::string, std::vector<float>>> snapshot_parameters(
    const UtmModel& model) {
  std::vector<std::pair<std::string, std::vector<float>>> out;
  for (const auto& [name, t] : model.named_parameters()) {
    std::vector<float> values(t.values().size());
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] = float(t.values()[i]);
    out.emplace_back(name, std::move(values));
  }
  return out;
}

}  // namespace utm
