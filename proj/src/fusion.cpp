#include "utm/fusion.hpp"

#include "utm/ops.hpp"

namespace utm {

namespace {

void check_stack_shapes(const FeatureStack& st, const char* what) {
  check_shape(!st.samples.empty(), std::string(what) + ": empty feature stack");
  for (const Tensor& t : st.samples)
    check_shape(same_shape(t.shape(), st.samples[0].shape()),
                std::string(what) + ": ragged feature stack");
}

void check_pair(const FeatureStack& fm, const FeatureStack& fa,
                const char* what) {
  check_stack_shapes(fm, what);
  check_stack_shapes(fa, what);
  check_shape(fm.samples.size() == fa.samples.size(),
              std::string(what) + ": branch sample counts differ");
  check_shape(same_shape(fm.samples[0].shape(), fa.samples[0].shape()),
              std::string(what) + ": branch feature shapes differ");
}

}  // namespace

FusedFeature ugf_fuse(const FeatureStack& fm, const FeatureStack& fa,
                      bool keep_weights) {
  check_pair(fm, fa, "ugf_fuse");
  check_shape(fm.samples.size() >= 2,
              "ugf_fuse: need at least 2 samples for a variance estimate");

  const auto [mean_m, var_m] = stack_mean_var(fm.samples);
  const auto [mean_a, var_a] = stack_mean_var(fa.samples);
  const Tensor w_m = spatial_softmax(sigmoid(var_m));
  const Tensor w_a = spatial_softmax(sigmoid(var_a));

  FusedFeature out;
  out.map = mean_m * w_m + mean_a * w_a;
  if (keep_weights) out.weight_maps = {w_m.detached(), w_a.detached()};
  return out;
}

FusedFeature va_fuse(const FeatureStack& fm, const FeatureStack& fa) {
  check_pair(fm, fa, "va_fuse");
  FusedFeature out;
  out.map = stack_mean(fm.samples) + stack_mean(fa.samples);
  return out;
}

AmParams AmParams::make(int channels, Rng& rng) {
  check_arg(channels > 0, "attention fusion needs positive channel count");
  AmParams p;
  p.thermal_kernel = kaiming_uniform({channels, channels, 1, 1}, rng);
  p.radar_kernel = kaiming_uniform({channels, channels, 1, 1}, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> AmParams::named_parameters() const {
  return {{"fusion.am.thermal.kernel", thermal_kernel},
          {"fusion.am.radar.kernel", radar_kernel}};
}

FusedFeature am_fuse(const FeatureStack& fm, const FeatureStack& fa,
                     const AmParams& params) {
  check_pair(fm, fa, "am_fuse");
  const Tensor query = conv2d(stack_mean(fm.samples), params.thermal_kernel, 1, 0);
  const Tensor mask =
      spatial_softmax(conv2d(stack_mean(fa.samples), params.radar_kernel, 1, 0));
  FusedFeature out;
  out.map = query * mask;
  return out;
}

Tensor sod_compose(const Tensor& thermal1, const Tensor& radar_depth1) {
  check_shape(thermal1.shape().size() == 3 && thermal1.dim(0) == 1,
              "sod_compose: thermal input must be [1,H,W]");
  check_shape(radar_depth1.shape().size() == 3 && radar_depth1.dim(0) == 1,
              "sod_compose: radar input must be [1,H,W]");
  check_shape(same_shape(thermal1.shape(), radar_depth1.shape()),
              "sod_compose: inputs must share spatial dims");
  return concat_channels({thermal1, thermal1, radar_depth1});
}

FusionStrategy parse_strategy(const std::string& name) {
  if (name == "ugf") return FusionStrategy::kUgf;
  if (name == "va") return FusionStrategy::kVa;
  if (name == "am") return FusionStrategy::kAm;
  if (name == "sod") return FusionStrategy::kSod;
  throw std::invalid_argument("unknown fusion strategy: " + name);
}

std::string strategy_name(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::kUgf: return "ugf";
    case FusionStrategy::kVa: return "va";
    case FusionStrategy::kAm: return "am";
    case FusionStrategy::kSod: return "sod";
  }
  throw std::logic_error("unreachable strategy");
}

}  // namespace utm
