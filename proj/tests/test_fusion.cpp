#include <cmath>
#include <vector>

#include "doctest.h"
#include "utm/fusion.hpp"
#include "utm/ops.hpp"
#include "utm/rng.hpp"

using namespace utm;

namespace {

Tensor random_map(Rng& rng, const Shape& shape, bool requires_grad = false) {
  std::vector<real> v(numel(shape));
  for (auto& x : v) x = static_cast<real>(rng.uniform(-1.5, 1.5));
  return Tensor::from_values(shape, v, requires_grad);
}

FeatureStack random_stack(Rng& rng, int n, const Shape& shape,
                          bool requires_grad = false) {
  FeatureStack st;
  st.branch_tag = "main";
  for (int i = 0; i < n; ++i) st.samples.push_back(random_map(rng, shape, requires_grad));
  return st;
}

FeatureStack constant_stack(int n, const Shape& shape, real value) {
  FeatureStack st;
  st.branch_tag = "main";
  for (int i = 0; i < n; ++i) st.samples.push_back(Tensor::full(shape, value));
  return st;
}

}  // namespace

TEST_CASE("ugf composition matches the straight-line oracle") {
  Rng rng(101);
  const Shape shape{4, 6, 6};
  auto fm = random_stack(rng, 5, shape);
  auto fa = random_stack(rng, 5, shape);

  auto fused = ugf_fuse(fm, fa, true);

  const auto [mean_m, var_m] = stack_mean_var(fm.samples);
  const auto [mean_a, var_a] = stack_mean_var(fa.samples);
  const Tensor w_m = spatial_softmax(sigmoid(var_m));
  const Tensor w_a = spatial_softmax(sigmoid(var_a));
  for (std::size_t i = 0; i < fused.map.size(); ++i) {
    const double want =
        double(mean_m.values()[i]) * double(w_m.values()[i]) +
        double(mean_a.values()[i]) * double(w_a.values()[i]);
    CHECK(double(fused.map.values()[i]) == doctest::Approx(want).epsilon(1e-6));
  }
  REQUIRE(fused.weight_maps.has_value());
  for (std::size_t i = 0; i < w_m.size(); ++i) {
    CHECK(fused.weight_maps->first.values()[i] == w_m.values()[i]);
    CHECK(fused.weight_maps->second.values()[i] == w_a.values()[i]);
  }
}

TEST_CASE("ugf weight maps: nonnegative, unit spatial sum per channel") {
  Rng rng(111);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 1 + int(rng.uniform_int(0, 3));
    const int h = 2 + int(rng.uniform_int(0, 6));
    const int w = 2 + int(rng.uniform_int(0, 6));
    auto fm = random_stack(rng, 3, {c, h, w});
    auto fa = random_stack(rng, 3, {c, h, w});
    auto fused = ugf_fuse(fm, fa, true);
    for (const Tensor* wm : {&fused.weight_maps->first, &fused.weight_maps->second}) {
      for (real x : wm->values()) CHECK(x >= 0);
      for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int i = 0; i < h * w; ++i)
          s += double(wm->values()[std::size_t(ch) * h * w + i]);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("ugf degeneracies") {
  SUBCASE("zero variance: exactly uniform weights, (m+a)/(HW) fusion") {
    const Shape shape{3, 4, 5};
    Rng rng(121);
    // identical samples in each stack (p=0 situation), but random across space
    const Tensor base_m = random_map(rng, shape);
    const Tensor base_a = random_map(rng, shape);
    FeatureStack fm, fa;
    for (int i = 0; i < 4; ++i) {
      fm.samples.push_back(base_m);
      fa.samples.push_back(base_a);
    }
    auto fused = ugf_fuse(fm, fa, true);
    const double uniform = 1.0 / (4 * 5);
    for (real x : fused.weight_maps->first.values())
      CHECK(double(x) == doctest::Approx(uniform).epsilon(1e-6));
    for (std::size_t i = 0; i < fused.map.size(); ++i) {
      const double want =
          (double(base_m.values()[i]) + double(base_a.values()[i])) * uniform;
      CHECK(double(fused.map.values()[i]) == doctest::Approx(want).epsilon(1e-6));
    }
  }
  SUBCASE("constant nonzero variance also gives uniform weights") {
    const Shape shape{2, 3, 4};
    // samples alternate +/- delta around a random base: variance = delta^2
    Rng rng(122);
    const Tensor base = random_map(rng, shape);
    FeatureStack fm;
    for (int i = 0; i < 2; ++i) {
      std::vector<real> v = base.values();
      for (auto& x : v) x += (i == 0 ? real(0.25) : real(-0.25));
      fm.samples.push_back(Tensor::from_values(shape, v));
    }
    FeatureStack fa = fm;
    auto fused = ugf_fuse(fm, fa, true);
    const double uniform = 1.0 / (3 * 4);
    for (real x : fused.weight_maps->first.values())
      CHECK(double(x) == doctest::Approx(uniform).epsilon(1e-6));
  }
  SUBCASE("single high-variance pixel dominates its branch weights") {
    const Shape shape{3, 5, 5};
    FeatureStack fm = constant_stack(4, shape, real(0.5));
    // rebuild sample tensors so one pixel varies across passes
    for (int i = 0; i < 4; ++i) {
      std::vector<real> v = fm.samples[i].values();
      v[1 * 25 + 2 * 5 + 3] = real(i);  // channel 1, (2,3)
      fm.samples[i] = Tensor::from_values(shape, v);
    }
    FeatureStack fa = constant_stack(4, shape, real(0.1));
    auto fused = ugf_fuse(fm, fa, true);
    const auto& w = fused.weight_maps->first.values();
    const real hot = w[1 * 25 + 2 * 5 + 3];
    for (std::size_t i = 0; i < w.size(); ++i)
      if (i != std::size_t(1 * 25 + 2 * 5 + 3)) CHECK(hot > w[i]);
  }
}

TEST_CASE("ugf is symmetric under branch swap") {
  Rng rng(131);
  auto fm = random_stack(rng, 3, {4, 4, 6});
  auto fa = random_stack(rng, 3, {4, 4, 6});
  auto ab = ugf_fuse(fm, fa);
  auto ba = ugf_fuse(fa, fm);
  for (std::size_t i = 0; i < ab.map.size(); ++i)
    CHECK(ab.map.values()[i] == ba.map.values()[i]);
}

TEST_CASE("ugf validation") {
  Rng rng(141);
  auto fm = random_stack(rng, 3, {2, 4, 4});
  SUBCASE("N mismatch") {
    auto fa = random_stack(rng, 2, {2, 4, 4});
    CHECK_THROWS_AS(ugf_fuse(fm, fa), ShapeError);
  }
  SUBCASE("shape mismatch") {
    auto fa = random_stack(rng, 3, {2, 4, 5});
    CHECK_THROWS_AS(ugf_fuse(fm, fa), ShapeError);
  }
  SUBCASE("N=1 cannot carry variance") {
    auto f1 = random_stack(rng, 1, {2, 4, 4});
    auto f2 = random_stack(rng, 1, {2, 4, 4});
    CHECK_THROWS_AS(ugf_fuse(f1, f2), ShapeError);
  }
  SUBCASE("default call keeps no weight maps") {
    auto fa = random_stack(rng, 3, {2, 4, 4});
    CHECK_FALSE(ugf_fuse(fm, fa).weight_maps.has_value());
  }
}

TEST_CASE("ugf weight maps stay out of the gradient tape") {
  Rng rng(145);
  auto fm = random_stack(rng, 3, {2, 4, 4}, true);
  auto fa = random_stack(rng, 3, {2, 4, 4}, true);
  auto fused = ugf_fuse(fm, fa, true);
  sum(fused.map).backward();
  for (const auto& s : fm.samples) {
    REQUIRE(s.has_grad());
    double mag = 0;
    for (real g : s.grad()) mag += std::abs(double(g));
    CHECK(mag > 0);
  }
  CHECK_FALSE(fused.weight_maps->first.requires_grad());
}

TEST_CASE("va_fuse") {
  SUBCASE("constant ones sum to two") {
    auto fm = constant_stack(3, {2, 4, 4}, real(1));
    auto fa = constant_stack(3, {2, 4, 4}, real(1));
    auto fused = va_fuse(fm, fa);
    for (real x : fused.map.values()) CHECK(x == real(2));
  }
  SUBCASE("zero auxiliary stack is the identity") {
    Rng rng(151);
    auto fm = random_stack(rng, 4, {3, 4, 4});
    auto fa = constant_stack(4, {3, 4, 4}, real(0));
    auto fused = va_fuse(fm, fa);
    auto m = stack_mean(fm.samples);
    for (std::size_t i = 0; i < m.size(); ++i)
      CHECK(fused.map.values()[i] == m.values()[i]);
  }
  SUBCASE("random stacks match the mean-sum oracle") {
    Rng rng(152);
    auto fm = random_stack(rng, 5, {4, 6, 6});
    auto fa = random_stack(rng, 5, {4, 6, 6});
    auto fused = va_fuse(fm, fa);
    for (std::size_t i = 0; i < fused.map.size(); ++i) {
      double sm = 0, sa = 0;
      for (int s = 0; s < 5; ++s) {
        sm += double(fm.samples[s].values()[i]);
        sa += double(fa.samples[s].values()[i]);
      }
      CHECK(double(fused.map.values()[i]) ==
            doctest::Approx(sm / 5 + sa / 5).epsilon(1e-6));
    }
  }
  SUBCASE("shape mismatch") {
    Rng rng(153);
    auto fm = random_stack(rng, 2, {2, 4, 4});
    auto fa = random_stack(rng, 2, {2, 4, 6});
    CHECK_THROWS_AS(va_fuse(fm, fa), ShapeError);
  }
}

TEST_CASE("am_fuse") {
  const int C = 3;

  SUBCASE("identity convs, constant radar: uniformly scaled query") {
    std::vector<real> ident(std::size_t(C) * C, real(0));
    for (int i = 0; i < C; ++i) ident[std::size_t(i) * C + i] = real(1);
    AmParams p;
    p.thermal_kernel = Tensor::from_values({C, C, 1, 1}, ident);
    p.radar_kernel = Tensor::from_values({C, C, 1, 1}, ident);

    Rng rng(161);
    auto fm = random_stack(rng, 3, {C, 4, 5});
    auto fa = constant_stack(3, {C, 4, 5}, real(0.7));
    auto fused = am_fuse(fm, fa, p);
    auto mean_m = stack_mean(fm.samples);
    const double uniform = 1.0 / (4 * 5);
    for (std::size_t i = 0; i < fused.map.size(); ++i)
      CHECK(double(fused.map.values()[i]) ==
            doctest::Approx(double(mean_m.values()[i]) * uniform).epsilon(1e-6));
  }
  SUBCASE("zero thermal branch annihilates") {
    Rng rng(162);
    auto fm = constant_stack(2, {C, 4, 4}, real(0));
    auto fa = random_stack(rng, 2, {C, 4, 4});
    Rng prng(163);
    auto p = AmParams::make(C, prng);
    auto fused = am_fuse(fm, fa, p);
    for (real x : fused.map.values()) CHECK(x == real(0));
  }
  SUBCASE("random inputs match the stepwise oracle") {
    Rng rng(164);
    auto fm = random_stack(rng, 4, {C, 5, 6});
    auto fa = random_stack(rng, 4, {C, 5, 6});
    Rng prng(165);
    auto p = AmParams::make(C, prng);
    auto fused = am_fuse(fm, fa, p);

    const Tensor query = conv2d(stack_mean(fm.samples), p.thermal_kernel, 1, 0);
    const Tensor mask =
        spatial_softmax(conv2d(stack_mean(fa.samples), p.radar_kernel, 1, 0));
    for (std::size_t i = 0; i < fused.map.size(); ++i)
      CHECK(double(fused.map.values()[i]) ==
            doctest::Approx(double(query.values()[i]) * double(mask.values()[i]))
                .epsilon(1e-6));
  }
}

TEST_CASE("sod_compose") {
  SUBCASE("construction example") {
    auto t = Tensor::full({1, 4, 6}, real(1));
    auto r = Tensor::zeros({1, 4, 6});
    auto rgb = sod_compose(t, r);
    CHECK(rgb.shape() == Shape{3, 4, 6});
    for (int i = 0; i < 24; ++i) {
      CHECK(rgb.values()[i] == real(1));
      CHECK(rgb.values()[24 + i] == real(1));
      CHECK(rgb.values()[48 + i] == real(0));
    }
  }
  SUBCASE("channel slices equal sources bitwise") {
    Rng rng(171);
    auto t = random_map(rng, {1, 6, 8});
    auto r = random_map(rng, {1, 6, 8});
    auto rgb = sod_compose(t, r);
    for (int i = 0; i < 48; ++i) {
      CHECK(rgb.values()[i] == t.values()[i]);
      CHECK(rgb.values()[48 + i] == t.values()[i]);
      CHECK(rgb.values()[96 + i] == r.values()[i]);
    }
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(sod_compose(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 4, 5})),
                    ShapeError);
    CHECK_THROWS_AS(sod_compose(Tensor::zeros({2, 4, 4}), Tensor::zeros({1, 4, 4})),
                    ShapeError);
  }
}

TEST_CASE("strategies emit identical shapes; selector round-trips") {
  Rng rng(181);
  const Shape shape{8, 4, 6};
  auto fm = random_stack(rng, 3, shape);
  auto fa = random_stack(rng, 3, shape);
  Rng prng(182);
  auto p = AmParams::make(8, prng);
  CHECK(ugf_fuse(fm, fa).map.shape() == shape);
  CHECK(va_fuse(fm, fa).map.shape() == shape);
  CHECK(am_fuse(fm, fa, p).map.shape() == shape);

  for (const char* name : {"ugf", "va", "am", "sod"})
    CHECK(strategy_name(parse_strategy(name)) == name);
  CHECK_THROWS_AS(parse_strategy("blend"), std::invalid_argument);
}
