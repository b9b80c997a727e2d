#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "utm/layers.hpp"
#include "utm/rng.hpp"
#include "utm/tensor.hpp"

namespace utm {

/// Monte-Carlo dropout feature extractor configuration. Dropout stays active
/// at inference; the N passes are what produce the uncertainty signal.
struct BfeConfig {
  real dropout_rate = real(0.2);
  int forward_passes = 5;
  std::set<int> dropout_layers{4, 5};  // 1-based block indices
  std::vector<int> channels{16, 32, 64, 96, 128};

  void validate() const;
  int blocks() const { return static_cast<int>(channels.size()); }
};

/// One extractor branch: blocks 1-3 downsample by 2 each (so /8 total),
/// later blocks keep resolution.
struct BfeBranch {
  std::vector<ConvBlock> blocks;
};

struct BfeModel {
  BfeBranch main;  // thermal
  BfeBranch aux;   // radar depth
  BfeConfig cfg;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

struct FeatureStack {
  std::vector<Tensor> samples;  // N tensors [C_last, H/8, W/8]
  std::string branch_tag;       // "main" | "auxiliary" | "mono"
};

BfeModel build_bfe(const BfeConfig& cfg, Rng& rng);

/// N stochastic passes over one branch. Blocks before the first dropout site
/// are pass-invariant and computed once; every pass then draws fresh masks.
/// With dropout disabled (empty layer set or p=0) the single deterministic
/// result is replicated N times.
FeatureStack branch_forward(const BfeBranch& branch, const Tensor& input3,
                            const BfeConfig& cfg, Rng& rng,
                            const std::string& tag);

/// thermal -> main branch, radar depth -> auxiliary branch; both [3,H,W] with
/// H,W divisible by 8 and matching across modalities.
std::pair<FeatureStack, FeatureStack> bfe_forward(const BfeModel& model,
                                                  const Tensor& thermal3,
                                                  const Tensor& radar3,
                                                  Rng& rng);

}  // namespace utm
