#pragma once

#include <vector>

#include "utm/tensor.hpp"

namespace utm {

struct SgdConfig {
  real learning_rate_initial = real(0.01);
  real momentum = real(0.937);
  real weight_decay = real(5e-4);
  real clip_norm = real(10);  // global gradient norm cap; 0 disables
  int total_epochs = 100;

  void validate() const;
};

/// Linear decay: lr0 * (1 - epoch/total_epochs); zero at the final epoch.
real lr_schedule(const SgdConfig& cfg, int epoch);

/// Momentum SGD with decoupled-from-nothing classic L2 weight decay folded
/// into the gradient: v <- m*v + (s*g + wd*p); p <- p - lr(epoch)*v, where
/// s rescales the raw gradient so its global L2 norm stays within
/// clip_norm. Without the cap an early loss spike can slam the bounded
/// box-decode logits into their sigmoid rails, where they stop learning.
class Sgd {
 public:
  explicit Sgd(std::vector<Tensor> params);

  /// One update over all parameters; clears their gradients. Throws
  /// std::logic_error if any parameter is missing its gradient.
  void step(const SgdConfig& cfg, int epoch);

  const std::vector<Tensor>& params() const { return params_; }
  std::vector<std::vector<real>>& velocity() { return velocity_; }
  const std::vector<std::vector<real>>& velocity() const { return velocity_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<real>> velocity_;
};

}  // namespace utm
