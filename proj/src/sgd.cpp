#include "utm/sgd.hpp"

namespace utm {

void SgdConfig::validate() const {
  check_arg(learning_rate_initial > 0, "learning_rate_initial must be > 0");
  check_arg(momentum >= 0 && momentum < 1, "momentum must lie in [0,1)");
  check_arg(weight_decay >= 0, "weight_decay must be >= 0");
  check_arg(clip_norm >= 0, "clip_norm must be >= 0");
  check_arg(total_epochs > 0, "total_epochs must be positive");
}

real lr_schedule(const SgdConfig& cfg, int epoch) {
  cfg.validate();
  check_arg(epoch >= 0 && epoch <= cfg.total_epochs,
            "epoch " + std::to_string(epoch) + " outside [0," +
                std::to_string(cfg.total_epochs) + "]");
  return cfg.learning_rate_initial *
         (real(1) - real(epoch) / real(cfg.total_epochs));
}

Sgd::Sgd(std::vector<Tensor> params) : params_(std::move(params)) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) {
    check_arg(p.defined() && p.requires_grad(),
              "optimizer parameters must be requires_grad leaves");
    velocity_.emplace_back(p.size(), real(0));
  }
}

void Sgd::step(const SgdConfig& cfg, int epoch) {
  const real lr = lr_schedule(cfg, epoch);
  real scale = real(1);
  if (cfg.clip_norm > 0) {
    double ss = 0.0;
    for (const Tensor& p : params_) {
      check_state(p.has_grad(), "sgd step: parameter has no gradient");
      for (real gv : p.grad()) ss += double(gv) * double(gv);
    }
    const double norm = std::sqrt(ss);
    if (norm > double(cfg.clip_norm))
      scale = real(double(cfg.clip_norm) / norm);
  }
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    check_state(p.has_grad(),
                "sgd step: parameter " + std::to_string(pi) + " has no gradient");
    auto& v = velocity_[pi];
    auto& vals = p.values();
    const auto& g = p.grad();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      v[i] = cfg.momentum * v[i] + (scale * g[i] + cfg.weight_decay * vals[i]);
      vals[i] -= lr * v[i];
    }
    p.zero_grad();
  }
}

}  // namespace utm
