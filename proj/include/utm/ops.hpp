#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "utm/rng.hpp"
#include "utm/tensor.hpp"

namespace utm {

/// 2D cross-correlation ("conv" in deep-learning usage), no bias.
/// input [C_in,H,W], kernel [C_out,C_in,kh,kw] -> [C_out,H',W'] with
/// H' = (H + 2*padding - kh)/stride + 1. im2col + GEMM under the hood.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride,
              int padding);

/// x [C,H,W] + bias[c] broadcast over the spatial plane.
Tensor channel_bias(const Tensor& x, const Tensor& bias);

/// x [C,H,W] * gamma[c] + beta[c]; the batch-statistics-free normalization
/// carrier in every conv block.
Tensor channel_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta);

Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);  // x * sigmoid(x)
Tensor relu(const Tensor& x);
Tensor atan(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);  // requires x >= 0 elementwise
Tensor neg(const Tensor& x);

// Elementwise binary ops over identical shapes (no broadcasting beyond the
// *_scalar forms).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);  // ties differentiate to a
Tensor maximum(const Tensor& a, const Tensor& b);  // ties differentiate to a

Tensor add_scalar(const Tensor& x, real c);
Tensor mul_scalar(const Tensor& x, real c);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, real c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, real c) { return add_scalar(a, -c); }
inline Tensor operator*(const Tensor& a, real c) { return mul_scalar(a, c); }
inline Tensor operator*(real c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// Full reductions to a scalar tensor (double-accumulated).
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Per-channel softmax over the H*W positions of [C,H,W]; each channel of the
/// output sums to 1. Max-subtracted for stability.
Tensor spatial_softmax(const Tensor& x);

/// Per-channel standardization of [C,H,W] over the H*W positions:
/// (x - mean_c) / sqrt(var_c + eps). Population variance, no learned affine.
Tensor instance_norm(const Tensor& x, real eps = real(1e-5));

/// Inverted dropout: when active, zeroes elements with probability p and
/// scales survivors by 1/(1-p); identity when inactive or p == 0.
/// Throws std::invalid_argument for p outside [0,1).
Tensor dropout(const Tensor& x, real p, bool active, Rng& rng);

/// Elementwise mean over N >= 1 same-shaped tensors.
Tensor stack_mean(const std::vector<Tensor>& stack);
/// Elementwise population variance (divide by N) over N >= 2 tensors.
Tensor stack_var(const std::vector<Tensor>& stack);
/// Both at once; throws std::invalid_argument when N < 2.
std::pair<Tensor, Tensor> stack_mean_var(const std::vector<Tensor>& stack);

/// Concatenate [C_i,H,W] parts along the channel axis.
Tensor concat_channels(const std::vector<Tensor>& parts);

/// Pick flat-index elements into a rank-1 tensor; backward scatter-adds.
Tensor gather(const Tensor& x, std::vector<std::size_t> indices);

/// Mean over elements of the numerically stable binary cross entropy between
/// logits and constant targets in [0,1].
Tensor bce_with_logits_mean(const Tensor& logits,
                            const std::vector<real>& targets);

/// Kaiming-uniform leaf parameter: bound sqrt(6/fan_in) with fan_in inferred
/// as product(shape[1:]) (or shape[0] for rank-1). requires_grad on.
Tensor kaiming_uniform(Shape shape, Rng& rng);

}  // namespace utm
