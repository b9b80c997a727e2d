#include "utm/layers.hpp"

namespace utm {

ConvBlock ConvBlock::make(int c_in, int c_out, int ksize, int stride, Rng& rng) {
  check_arg(c_in > 0 && c_out > 0, "conv block channels must be positive");
  check_arg(ksize == 1 || ksize == 3, "conv block kernel must be 1x1 or 3x3");
  ConvBlock b;
  b.kernel = kaiming_uniform({c_out, c_in, ksize, ksize}, rng);
  b.gamma = Tensor::full({c_out}, real(1), true);
  b.beta = Tensor::zeros({c_out}, true);
  b.stride = stride;
  b.padding = ksize / 2;
  return b;
}

void ConvBlock::collect(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + ".kernel", kernel);
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

}  // namespace utm
