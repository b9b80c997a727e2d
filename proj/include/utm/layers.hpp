#pragma once

#include <string>
#include <utility>
#include <vector>

#include "utm/ops.hpp"
#include "utm/rng.hpp"
#include "utm/tensor.hpp"

namespace utm {

/// conv3x3-or-1x1 -> per-channel scale/bias -> SiLU. The building block of
/// both extractor branches and the detection neck.
struct ConvBlock {
  Tensor kernel;  // [Cout,Cin,k,k]
  Tensor gamma;   // [Cout]
  Tensor beta;    // [Cout]
  int stride = 1;
  int padding = 1;

  static ConvBlock make(int c_in, int c_out, int ksize, int stride, Rng& rng);

  Tensor forward(const Tensor& x) const {
    return silu(channel_affine(conv2d(x, kernel, stride, padding), gamma, beta));
  }

  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out) const;
};

}  // namespace utm
