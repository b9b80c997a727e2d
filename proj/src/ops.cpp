#include "utm/ops.hpp"

#include <cblas-openblas.h>

#include <algorithm>
#include <cmath>
#include <memory>

namespace utm {

namespace {

// Pin BLAS to one thread: reductions stay in a fixed order, so equal seeds
// give bitwise-equal runs.
struct BlasThreadPin {
  BlasThreadPin() { openblas_set_num_threads(1); }
};
const BlasThreadPin blas_pin;

inline void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k,
                 real alpha, const real* a, int lda, const real* b, int ldb,
                 real beta, real* c, int ldc) {
#ifdef UTM_USE_DOUBLE
  cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c,
              ldc);
#else
  cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c,
              ldc);
#endif
}

// col layout: row r = (c*kh + ki)*kw + kj, column = oh*wo + ow.
void im2col(const real* in, int c_in, int h, int w, int kh, int kw, int stride,
            int pad, int ho, int wo, real* col) {
  for (int c = 0; c < c_in; ++c) {
    const real* plane = in + std::size_t(c) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        real* dst = col + (std::size_t((c * kh + ki) * kw + kj)) * (ho * wo);
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * stride - pad + ki;
          real* drow = dst + std::size_t(oh) * wo;
          if (ih < 0 || ih >= h) {
            std::fill(drow, drow + wo, real(0));
            continue;
          }
          const real* srow = plane + std::size_t(ih) * w;
          if (stride == 1) {
            const int begin = std::max(0, pad - kj);
            const int end = std::min(wo, w - kj + pad);
            std::fill(drow, drow + std::max(begin, 0), real(0));
            if (end > begin)
              std::copy(srow + (begin - pad + kj), srow + (end - pad + kj),
                        drow + begin);
            std::fill(drow + std::max(end, begin), drow + wo, real(0));
          } else {
            for (int ow = 0; ow < wo; ++ow) {
              const int iw = ow * stride - pad + kj;
              drow[ow] = (iw >= 0 && iw < w) ? srow[iw] : real(0);
            }
          }
        }
      }
    }
  }
}

void col2im_acc(const real* col, int c_in, int h, int w, int kh, int kw,
                int stride, int pad, int ho, int wo, real* grad_in) {
  for (int c = 0; c < c_in; ++c) {
    real* plane = grad_in + std::size_t(c) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const real* src = col + (std::size_t((c * kh + ki) * kw + kj)) * (ho * wo);
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= h) continue;
          const real* srow = src + std::size_t(oh) * wo;
          real* grow = plane + std::size_t(ih) * w;
          for (int ow = 0; ow < wo; ++ow) {
            const int iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < w) grow[iw] += srow[ow];
          }
        }
      }
    }
  }
}

inline real stable_sigmoid(real v) {
  if (v >= 0) {
    const real e = std::exp(-v);
    return real(1) / (real(1) + e);
  }
  const real e = std::exp(v);
  return e / (real(1) + e);
}

void check_rank3(const Tensor& x, const char* op) {
  check_shape(x.defined() && x.shape().size() == 3,
              std::string(op) + " expects a [C,H,W] tensor");
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  check_shape(a.defined() && b.defined() && same_shape(a.shape(), b.shape()),
              std::string(op) + " shape mismatch: " + shape_str(a.shape()) +
                  " vs " + shape_str(b.shape()));
}

// Unary elementwise: dfdx(x, y) is the local derivative.
template <class F, class D>
Tensor unary_ew(const Tensor& x, F&& f, D&& dfdx) {
  const auto& xv = x.values();
  std::vector<real> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_op(x.shape(), std::move(out), {x},
                 [dfdx](Tensor::Node& self) {
                   auto& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     p.grad[i] += self.grad[i] * dfdx(p.values[i], self.values[i]);
                 });
}

// Binary elementwise over identical shapes: dfda/dfdb take (a, b).
template <class F, class DA, class DB>
Tensor binary_ew(const Tensor& a, const Tensor& b, const char* name, F&& f,
                 DA&& dfda, DB&& dfdb) {
  check_same(a, b, name);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<real> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
  return make_op(a.shape(), std::move(out), {a, b},
                 [dfda, dfdb](Tensor::Node& self) {
                   auto& pa = *self.parents[0];
                   auto& pb = *self.parents[1];
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     const real g = self.grad[i];
                     const real x = pa.values[i];
                     const real y = pb.values[i];
                     if (pa.requires_grad) pa.grad[i] += g * dfda(x, y);
                     if (pb.requires_grad) pb.grad[i] += g * dfdb(x, y);
                   }
                 });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride,
              int padding) {
  check_arg(stride >= 1, "conv2d stride must be >= 1");
  check_arg(padding >= 0, "conv2d padding must be >= 0");
  check_rank3(input, "conv2d");
  check_shape(kernel.defined() && kernel.shape().size() == 4,
              "conv2d expects a [Cout,Cin,kh,kw] kernel");
  const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int c_out = kernel.dim(0), kc = kernel.dim(1);
  const int kh = kernel.dim(2), kw = kernel.dim(3);
  check_shape(c_in == kc, "conv2d channel mismatch: input C=" +
                              std::to_string(c_in) + ", kernel Cin=" +
                              std::to_string(kc));
  check_shape(kh <= h + 2 * padding && kw <= w + 2 * padding,
              "conv2d kernel exceeds padded input");
  const int ho = (h + 2 * padding - kh) / stride + 1;
  const int wo = (w + 2 * padding - kw) / stride + 1;
  const int k = c_in * kh * kw;
  const int npix = ho * wo;

  const bool unit = (kh == 1 && kw == 1 && stride == 1 && padding == 0);
  std::shared_ptr<std::vector<real>> col;
  const real* colp = nullptr;
  if (unit) {
    colp = input.values().data();
  } else {
    col = std::make_shared<std::vector<real>>(std::size_t(k) * npix);
    im2col(input.values().data(), c_in, h, w, kh, kw, stride, padding, ho, wo,
           col->data());
    colp = col->data();
  }

  std::vector<real> out(std::size_t(c_out) * npix);
  gemm(CblasNoTrans, CblasNoTrans, c_out, npix, k, real(1),
       kernel.values().data(), k, colp, npix, real(0), out.data(), npix);

  return make_op(
      {c_out, ho, wo}, std::move(out), {input, kernel},
      [=](Tensor::Node& self) {
        auto& in_node = *self.parents[0];
        auto& k_node = *self.parents[1];
        const real* g = self.grad.data();
        const real* cp = unit ? in_node.values.data() : col->data();
        if (k_node.requires_grad) {
          gemm(CblasNoTrans, CblasTrans, c_out, k, npix, real(1), g, npix, cp,
               npix, real(1), k_node.grad.data(), k);
        }
        if (in_node.requires_grad) {
          if (unit) {
            gemm(CblasTrans, CblasNoTrans, k, npix, c_out, real(1),
                 k_node.values.data(), k, g, npix, real(1),
                 in_node.grad.data(), npix);
          } else {
            std::vector<real> dcol(std::size_t(k) * npix);
            gemm(CblasTrans, CblasNoTrans, k, npix, c_out, real(1),
                 k_node.values.data(), k, g, npix, real(0), dcol.data(), npix);
            col2im_acc(dcol.data(), c_in, h, w, kh, kw, stride, padding, ho,
                       wo, in_node.grad.data());
          }
        }
      });
}

Tensor channel_bias(const Tensor& x, const Tensor& bias) {
  check_rank3(x, "channel_bias");
  check_shape(bias.defined() && bias.shape().size() == 1 &&
                  bias.dim(0) == x.dim(0),
              "channel_bias needs bias [C] matching input channels");
  const int c = x.dim(0);
  const std::size_t plane = std::size_t(x.dim(1)) * x.dim(2);
  const auto& xv = x.values();
  const auto& bv = bias.values();
  std::vector<real> out(xv.size());
  for (int ci = 0; ci < c; ++ci) {
    const real b = bv[std::size_t(ci)];
    for (std::size_t i = 0; i < plane; ++i)
      out[ci * plane + i] = xv[ci * plane + i] + b;
  }
  return make_op(x.shape(), std::move(out), {x, bias},
                 [c, plane](Tensor::Node& self) {
                   auto& px = *self.parents[0];
                   auto& pb = *self.parents[1];
                   for (int ci = 0; ci < c; ++ci) {
                     double acc = 0.0;
                     for (std::size_t i = 0; i < plane; ++i) {
                       const real g = self.grad[ci * plane + i];
                       if (px.requires_grad) px.grad[ci * plane + i] += g;
                       acc += double(g);
                     }
                     if (pb.requires_grad) pb.grad[std::size_t(ci)] += real(acc);
                   }
                 });
}

Tensor channel_affine(const Tensor& x, const Tensor& gamma,
                      const Tensor& beta) {
  check_rank3(x, "channel_affine");
  check_shape(gamma.defined() && gamma.shape().size() == 1 &&
                  gamma.dim(0) == x.dim(0),
              "channel_affine needs gamma [C] matching input channels");
  check_shape(beta.defined() && same_shape(beta.shape(), gamma.shape()),
              "channel_affine needs beta shaped like gamma");
  const int c = x.dim(0);
  const std::size_t plane = std::size_t(x.dim(1)) * x.dim(2);
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<real> out(xv.size());
  for (int ci = 0; ci < c; ++ci) {
    const real gm = gv[std::size_t(ci)];
    const real bt = bv[std::size_t(ci)];
    for (std::size_t i = 0; i < plane; ++i)
      out[ci * plane + i] = xv[ci * plane + i] * gm + bt;
  }
  return make_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [c, plane](Tensor::Node& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        for (int ci = 0; ci < c; ++ci) {
          const real gm = pg.values[std::size_t(ci)];
          double acc_g = 0.0, acc_b = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            const real g = self.grad[ci * plane + i];
            if (px.requires_grad) px.grad[ci * plane + i] += g * gm;
            acc_g += double(g) * double(px.values[ci * plane + i]);
            acc_b += double(g);
          }
          if (pg.requires_grad) pg.grad[std::size_t(ci)] += real(acc_g);
          if (pb.requires_grad) pb.grad[std::size_t(ci)] += real(acc_b);
        }
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_ew(
      x, [](real v) { return stable_sigmoid(v); },
      [](real, real y) { return y * (real(1) - y); });
}

Tensor silu(const Tensor& x) {
  return unary_ew(
      x, [](real v) { return v * stable_sigmoid(v); },
      [](real v, real) {
        const real s = stable_sigmoid(v);
        return s * (real(1) + v * (real(1) - s));
      });
}

Tensor relu(const Tensor& x) {
  return unary_ew(
      x, [](real v) { return v > 0 ? v : real(0); },
      [](real v, real) { return v > 0 ? real(1) : real(0); });
}

Tensor atan(const Tensor& x) {
  return unary_ew(
      x, [](real v) { return std::atan(v); },
      [](real v, real) { return real(1) / (real(1) + v * v); });
}

Tensor square(const Tensor& x) {
  return unary_ew(
      x, [](real v) { return v * v; },
      [](real v, real) { return real(2) * v; });
}

Tensor sqrt(const Tensor& x) {
  for (real v : x.values())
    check_arg(v >= 0, "sqrt requires nonnegative input");
  return unary_ew(
      x, [](real v) { return std::sqrt(v); },
      [](real, real y) { return real(1) / (real(2) * y); });
}

Tensor neg(const Tensor& x) {
  return unary_ew(
      x, [](real v) { return -v; }, [](real, real) { return real(-1); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "add", [](real x, real y) { return x + y; },
      [](real, real) { return real(1); }, [](real, real) { return real(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "sub", [](real x, real y) { return x - y; },
      [](real, real) { return real(1); }, [](real, real) { return real(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "mul", [](real x, real y) { return x * y; },
      [](real, real y) { return y; }, [](real x, real) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "div", [](real x, real y) { return x / y; },
      [](real, real y) { return real(1) / y; },
      [](real x, real y) { return -x / (y * y); });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "minimum", [](real x, real y) { return x <= y ? x : y; },
      [](real x, real y) { return x <= y ? real(1) : real(0); },
      [](real x, real y) { return x <= y ? real(0) : real(1); });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_ew(
      a, b, "maximum", [](real x, real y) { return x >= y ? x : y; },
      [](real x, real y) { return x >= y ? real(1) : real(0); },
      [](real x, real y) { return x >= y ? real(0) : real(1); });
}

Tensor add_scalar(const Tensor& x, real c) {
  return unary_ew(
      x, [c](real v) { return v + c; }, [](real, real) { return real(1); });
}

Tensor mul_scalar(const Tensor& x, real c) {
  return unary_ew(
      x, [c](real v) { return v * c; }, [c](real, real) { return c; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (real v : x.values()) acc += double(v);
  return make_op({1}, {real(acc)}, {x}, [](Tensor::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const real g = self.grad[0];
    for (auto& gi : p.grad) gi += g;
  });
}

Tensor mean(const Tensor& x) {
  const std::size_t n = x.size();
  check_arg(n > 0, "mean of empty tensor");
  double acc = 0.0;
  for (real v : x.values()) acc += double(v);
  return make_op({1}, {real(acc / double(n))}, {x}, [n](Tensor::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const real g = self.grad[0] / real(n);
    for (auto& gi : p.grad) gi += g;
  });
}

Tensor spatial_softmax(const Tensor& x) {
  check_rank3(x, "spatial_softmax");
  const int c = x.dim(0);
  const std::size_t plane = std::size_t(x.dim(1)) * x.dim(2);
  const auto& xv = x.values();
  std::vector<real> out(xv.size());
  for (int ci = 0; ci < c; ++ci) {
    const real* src = xv.data() + ci * plane;
    real* dst = out.data() + ci * plane;
    real m = src[0];
    for (std::size_t i = 1; i < plane; ++i) m = std::max(m, src[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = std::exp(src[i] - m);
      s += double(dst[i]);
    }
    const real inv = real(1.0 / s);
    for (std::size_t i = 0; i < plane; ++i) dst[i] *= inv;
  }
  return make_op(x.shape(), std::move(out), {x},
                 [c, plane](Tensor::Node& self) {
                   auto& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   for (int ci = 0; ci < c; ++ci) {
                     const real* y = self.values.data() + ci * plane;
                     const real* g = self.grad.data() + ci * plane;
                     real* d = p.grad.data() + ci * plane;
                     double dot = 0.0;
                     for (std::size_t i = 0; i < plane; ++i)
                       dot += double(g[i]) * double(y[i]);
                     const real dr = real(dot);
                     for (std::size_t i = 0; i < plane; ++i)
                       d[i] += y[i] * (g[i] - dr);
                   }
                 });
}

Tensor instance_norm(const Tensor& x, real eps) {
  check_rank3(x, "instance_norm");
  check_arg(eps > 0, "instance_norm eps must be > 0");
  const int c = x.dim(0);
  const std::size_t plane = std::size_t(x.dim(1)) * x.dim(2);
  const auto& xv = x.values();
  std::vector<real> out(xv.size());
  std::vector<real> inv_s(static_cast<std::size_t>(c));
  for (int ci = 0; ci < c; ++ci) {
    const real* src = xv.data() + ci * plane;
    real* dst = out.data() + ci * plane;
    double mu = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mu += double(src[i]);
    mu /= double(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = double(src[i]) - mu;
      var += d * d;
    }
    var /= double(plane);
    const real inv = real(1.0 / std::sqrt(var + double(eps)));
    inv_s[std::size_t(ci)] = inv;
    for (std::size_t i = 0; i < plane; ++i)
      dst[i] = real((double(src[i]) - mu)) * inv;
  }
  return make_op(x.shape(), std::move(out), {x},
                 [c, plane, inv_s](Tensor::Node& self) {
                   auto& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   for (int ci = 0; ci < c; ++ci) {
                     const real* y = self.values.data() + ci * plane;
                     const real* g = self.grad.data() + ci * plane;
                     real* d = p.grad.data() + ci * plane;
                     double gm = 0.0, gy = 0.0;
                     for (std::size_t i = 0; i < plane; ++i) {
                       gm += double(g[i]);
                       gy += double(g[i]) * double(y[i]);
                     }
                     gm /= double(plane);
                     gy /= double(plane);
                     const real inv = inv_s[std::size_t(ci)];
                     for (std::size_t i = 0; i < plane; ++i)
                       d[i] += inv * real(double(g[i]) - gm -
                                          double(y[i]) * gy);
                   }
                 });
}

Tensor dropout(const Tensor& x, real p, bool active, Rng& rng) {
  check_arg(p >= 0 && p < 1, "dropout rate must lie in [0,1)");
  if (!active || p == real(0)) {
    return make_op(x.shape(), x.values(), {x}, [](Tensor::Node& self) {
      auto& pr = *self.parents[0];
      if (!pr.requires_grad) return;
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pr.grad[i] += self.grad[i];
    });
  }
  const real scale = real(1) / (real(1) - p);
  const auto& xv = x.values();
  auto mask = std::make_shared<std::vector<real>>(xv.size());
  std::vector<real> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const real m = rng.uniform01() < double(p) ? real(0) : scale;
    (*mask)[i] = m;
    out[i] = xv[i] * m;
  }
  return make_op(x.shape(), std::move(out), {x}, [mask](Tensor::Node& self) {
    auto& pr = *self.parents[0];
    if (!pr.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pr.grad[i] += self.grad[i] * (*mask)[i];
  });
}

namespace {
void check_stack(const std::vector<Tensor>& stack, std::size_t min_n,
                 const char* op) {
  check_arg(stack.size() >= min_n, std::string(op) + " needs at least " +
                                       std::to_string(min_n) + " samples, got " +
                                       std::to_string(stack.size()));
  for (const auto& t : stack) check_same(stack.front(), t, op);
}
}  // namespace

Tensor stack_mean(const std::vector<Tensor>& stack) {
  check_stack(stack, 1, "stack_mean");
  const std::size_t n = stack.size();
  const std::size_t len = stack.front().size();
  std::vector<real> out(len);
  for (std::size_t i = 0; i < len; ++i) {
    double acc = 0.0;
    for (const auto& t : stack) acc += double(t.values()[i]);
    out[i] = real(acc / double(n));
  }
  return make_op(stack.front().shape(), std::move(out), stack,
                 [n](Tensor::Node& self) {
                   const real inv = real(1) / real(n);
                   for (auto& pp : self.parents) {
                     if (!pp->requires_grad) continue;
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       pp->grad[i] += self.grad[i] * inv;
                   }
                 });
}

Tensor stack_var(const std::vector<Tensor>& stack) {
  check_stack(stack, 2, "stack_var");
  const std::size_t n = stack.size();
  const std::size_t len = stack.front().size();
  auto mu = std::make_shared<std::vector<real>>(len);
  std::vector<real> out(len);
  for (std::size_t i = 0; i < len; ++i) {
    double acc = 0.0;
    for (const auto& t : stack) acc += double(t.values()[i]);
    (*mu)[i] = real(acc / double(n));
  }
  for (std::size_t i = 0; i < len; ++i) {
    double acc = 0.0;
    for (const auto& t : stack) {
      const double d = double(t.values()[i]) - double((*mu)[i]);
      acc += d * d;
    }
    out[i] = real(acc / double(n));
  }
  return make_op(stack.front().shape(), std::move(out), stack,
                 [n, mu](Tensor::Node& self) {
                   const real c = real(2) / real(n);
                   for (auto& pp : self.parents) {
                     if (!pp->requires_grad) continue;
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       pp->grad[i] +=
                           self.grad[i] * c * (pp->values[i] - (*mu)[i]);
                   }
                 });
}

std::pair<Tensor, Tensor> stack_mean_var(const std::vector<Tensor>& stack) {
  check_stack(stack, 2, "stack_mean_var");
  return {stack_mean(stack), stack_var(stack)};
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  check_arg(!parts.empty(), "concat_channels needs at least one part");
  for (const auto& t : parts) check_rank3(t, "concat_channels");
  const int h = parts.front().dim(1), w = parts.front().dim(2);
  int c_total = 0;
  for (const auto& t : parts) {
    check_shape(t.dim(1) == h && t.dim(2) == w,
                "concat_channels spatial mismatch");
    c_total += t.dim(0);
  }
  const std::size_t plane = std::size_t(h) * w;
  std::vector<real> out;
  out.reserve(std::size_t(c_total) * plane);
  for (const auto& t : parts)
    out.insert(out.end(), t.values().begin(), t.values().end());
  return make_op({c_total, h, w}, std::move(out), parts,
                 [](Tensor::Node& self) {
                   std::size_t off = 0;
                   for (auto& pp : self.parents) {
                     const std::size_t len = pp->values.size();
                     if (pp->requires_grad)
                       for (std::size_t i = 0; i < len; ++i)
                         pp->grad[i] += self.grad[off + i];
                     off += len;
                   }
                 });
}

Tensor gather(const Tensor& x, std::vector<std::size_t> indices) {
  check_arg(!indices.empty(), "gather with empty index list");
  for (std::size_t idx : indices)
    check_arg(idx < x.size(), "gather index " + std::to_string(idx) +
                                  " out of range for size " +
                                  std::to_string(x.size()));
  std::vector<real> out(indices.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = xv[indices[i]];
  auto idxp = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  return make_op({int(idxp->size())}, std::move(out), {x},
                 [idxp](Tensor::Node& self) {
                   auto& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   for (std::size_t i = 0; i < idxp->size(); ++i)
                     p.grad[(*idxp)[i]] += self.grad[i];
                 });
}

Tensor bce_with_logits_mean(const Tensor& logits,
                            const std::vector<real>& targets) {
  check_shape(logits.size() == targets.size(),
              "bce_with_logits_mean target count mismatch");
  const std::size_t n = logits.size();
  check_arg(n > 0, "bce_with_logits_mean of empty tensor");
  const auto& xv = logits.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = double(xv[i]);
    const double t = double(targets[i]);
    acc += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
  }
  auto tgt = std::make_shared<std::vector<real>>(targets);
  return make_op({1}, {real(acc / double(n))}, {logits},
                 [tgt, n](Tensor::Node& self) {
                   auto& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   const real g = self.grad[0] / real(n);
                   for (std::size_t i = 0; i < n; ++i)
                     p.grad[i] += g * (stable_sigmoid(p.values[i]) - (*tgt)[i]);
                 });
}

Tensor kaiming_uniform(Shape shape, Rng& rng) {
  check_arg(!shape.empty(), "kaiming_uniform needs a nonempty shape");
  std::size_t fan_in = 1;
  if (shape.size() > 1) {
    for (std::size_t i = 1; i < shape.size(); ++i)
      fan_in *= std::size_t(shape[i]);
  } else {
    fan_in = std::size_t(shape[0]);
  }
  const double bound = std::sqrt(6.0 / double(fan_in));
  std::vector<real> vals(numel(shape));
  for (auto& v : vals) v = real(rng.uniform(-bound, bound));
  return Tensor::from_values(std::move(shape), std::move(vals), true);
}

}  // namespace utm
