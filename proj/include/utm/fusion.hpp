#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "utm/bfe.hpp"
#include "utm/rng.hpp"
#include "utm/tensor.hpp"

namespace utm {

struct FusedFeature {
  Tensor map;  // [C, H/8, W/8]
  // UGF weight maps (main, auxiliary), detached values kept only on request
  std::optional<std::pair<Tensor, Tensor>> weight_maps;
};

/// Uncertainty-guided fusion: per branch, mean and variance over the N
/// samples, sigmoid of the variance, spatial softmax per channel, then
/// fused = mean_m (.) w_m + mean_a (.) w_a. Needs N >= 2 for the variance.
FusedFeature ugf_fuse(const FeatureStack& fm, const FeatureStack& fa,
                      bool keep_weights = false);

/// Vanilla addition: mean of each stack, summed.
FusedFeature va_fuse(const FeatureStack& fm, const FeatureStack& fa);

/// Attention-mask fusion parameters: one 1x1 conv per branch.
struct AmParams {
  Tensor thermal_kernel;  // [C,C,1,1] -> query
  Tensor radar_kernel;    // [C,C,1,1] -> attention logits

  static AmParams make(int channels, Rng& rng);
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

/// query = conv1x1(mean_m); mask = spatial_softmax(conv1x1(mean_a));
/// fused = query (.) mask.
FusedFeature am_fuse(const FeatureStack& fm, const FeatureStack& fa,
                     const AmParams& params);

/// Pseudo-RGB input composition for the single-branch baseline:
/// [thermal, thermal, radar_depth].
Tensor sod_compose(const Tensor& thermal1, const Tensor& radar_depth1);

enum class FusionStrategy { kUgf, kVa, kAm, kSod };

FusionStrategy parse_strategy(const std::string& name);
std::string strategy_name(FusionStrategy s);

}  // namespace utm
