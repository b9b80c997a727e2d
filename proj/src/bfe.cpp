#include "utm/bfe.hpp"

#include <algorithm>

#include "utm/ops.hpp"

namespace utm {

void BfeConfig::validate() const {
  check_arg(dropout_rate >= 0 && dropout_rate < 1,
            "dropout rate must be in [0,1)");
  check_arg(forward_passes >= 1, "forward passes must be >= 1");
  check_arg(channels.size() >= 3,
            "channel schedule needs at least the three downsampling blocks");
  for (int c : channels) check_arg(c > 0, "channel counts must be positive");
  check_arg(channels.back() == 128, "channel schedule must end at 128");
  for (int l : dropout_layers)
    check_arg(l >= 1 && l <= blocks(),
              "dropout layer index outside the block schedule");
}

std::vector<std::pair<std::string, Tensor>> BfeModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t b = 0; b < main.blocks.size(); ++b)
    main.blocks[b].collect("bfe.main.block" + std::to_string(b + 1), out);
  for (std::size_t b = 0; b < aux.blocks.size(); ++b)
    aux.blocks[b].collect("bfe.aux.block" + std::to_string(b + 1), out);
  return out;
}

std::vector<Tensor> BfeModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

namespace {

BfeBranch build_branch(const BfeConfig& cfg, Rng& rng) {
  BfeBranch br;
  int c_in = 3;
  for (int b = 0; b < cfg.blocks(); ++b) {
    const int stride = b < 3 ? 2 : 1;
    br.blocks.push_back(ConvBlock::make(c_in, cfg.channels[b], 3, stride, rng));
    c_in = cfg.channels[b];
  }
  return br;
}

}  // namespace

BfeModel build_bfe(const BfeConfig& cfg, Rng& rng) {
  cfg.validate();
  BfeModel m;
  m.cfg = cfg;
  m.main = build_branch(cfg, rng);
  m.aux = build_branch(cfg, rng);
  return m;
}

FeatureStack branch_forward(const BfeBranch& branch, const Tensor& input3,
                            const BfeConfig& cfg, Rng& rng,
                            const std::string& tag) {
  cfg.validate();
  const Shape& s = input3.shape();
  check_shape(s.size() == 3 && s[0] == 3, "branch input must be [3,H,W]");
  check_shape(s[1] % 8 == 0 && s[2] % 8 == 0,
              "branch input spatial dims must be divisible by 8");
  check_shape(static_cast<int>(branch.blocks.size()) == cfg.blocks(),
              "branch depth does not match the channel schedule");

  FeatureStack stack;
  stack.branch_tag = tag;
  stack.samples.reserve(cfg.forward_passes);

  const bool stochastic = !cfg.dropout_layers.empty() && cfg.dropout_rate > 0;
  if (!stochastic) {
    Tensor t = input3;
    for (const ConvBlock& blk : branch.blocks) t = blk.forward(t);
    for (int i = 0; i < cfg.forward_passes; ++i) stack.samples.push_back(t);
    return stack;
  }

  // blocks up to and including the first dropout site are pass-invariant
  const int first = *cfg.dropout_layers.begin();
  Tensor shared = input3;
  for (int b = 1; b <= first; ++b) shared = branch.blocks[b - 1].forward(shared);

  for (int i = 0; i < cfg.forward_passes; ++i) {
    Tensor t = dropout(shared, cfg.dropout_rate, true, rng);
    for (int b = first + 1; b <= cfg.blocks(); ++b) {
      t = branch.blocks[b - 1].forward(t);
      if (cfg.dropout_layers.count(b))
        t = dropout(t, cfg.dropout_rate, true, rng);
    }
    stack.samples.push_back(t);
  }
  return stack;
}

std::pair<FeatureStack, FeatureStack> bfe_forward(const BfeModel& model,
                                                  const Tensor& thermal3,
                                                  const Tensor& radar3,
                                                  Rng& rng) {
  check_shape(same_shape(thermal3.shape(), radar3.shape()),
              "thermal and radar inputs must share spatial dims");
  FeatureStack fm = branch_forward(model.main, thermal3, model.cfg, rng, "main");
  FeatureStack fa =
      branch_forward(model.aux, radar3, model.cfg, rng, "auxiliary");
  return {std::move(fm), std::move(fa)};
}

}  // namespace utm
