// Acceptance gate: eight end-to-end criteria, one [PASS]/[FAIL] line each.
// argv[1] must be the path to the utm CLI binary (used for the compare
// subcommand). Exit code is the number of failed criteria.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "oracles.hpp"
#include "utm/bfe.hpp"
#include "utm/checkpoint.hpp"
#include "utm/config.hpp"
#include "utm/fusion.hpp"
#include "utm/geometry.hpp"
#include "utm/mdn.hpp"
#include "utm/metrics.hpp"
#include "utm/model.hpp"
#include "utm/ops.hpp"
#include "utm/pipeline.hpp"
#include "utm/synthdata.hpp"

namespace fs = std::filesystem;
using namespace utm;

namespace {

// ---- pinned tolerances and scales ----------------------------------------
const double kFdTol = oracle::fd_tol();      // 1e-3 float / 1e-6 double
const double kFdStep = oracle::fd_step();
constexpr double kUgfSumTol = 1e-5;          // weight map channel sums
constexpr double kUgfUniformTol = 1e-6;      // degenerate stacks
constexpr double kRoundTripTol = 1e-6;       // meters
constexpr double kMetricsTol = 1e-9;
constexpr int kGradCasesPerOp = 100;
constexpr int kUgfStacks = 1000;
constexpr int kRoundTripPoints = 10000;
constexpr int kNmsFrames = 1000;

// Desk-scale run (criterion 6). Three MC passes keep the 30-epoch budget
// inside the 30-minute gate on one laptop core; the strategy is unchanged.
constexpr int kDeskTrain = 500, kDeskVal = 100, kDeskTest = 100;
constexpr int kDeskW = 160, kDeskH = 128;
constexpr int kDeskEpochs = 30;
constexpr int kDeskPasses = 3;
constexpr double kDeskTimeBudget = 1800.0;   // seconds
constexpr double kDeskAp50Gate = 0.5;

// Reduced-scale direction-of-effect runs (reported, not gated).
constexpr int kDirTrain = 120, kDirVal = 30, kDirTest = 30;
constexpr int kDirEpochs = 6;

// Reduced-scale ablations (criterion 7).
constexpr int kAblTrain = 100, kAblVal = 25, kAblTest = 25;
constexpr int kAblW = 96, kAblH = 64;
constexpr int kAblEpochs = 5;

fs::path g_base;
std::string g_cli;

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, pattern);
  std::vsnprintf(buf, sizeof(buf), pattern, ap);
  va_end(ap);
  return buf;
}

Tensor rand_t(Shape shape, Rng& rng, double lo, double hi,
              bool requires_grad = true) {
  std::size_t n = 1;
  for (int d : shape) n *= std::size_t(d);
  std::vector<real> vals(n);
  for (auto& v : vals) v = real(rng.uniform(lo, hi));
  return Tensor::from_values(std::move(shape), std::move(vals), requires_grad);
}

fs::path make_dataset(const std::string& name, int w, int h, int train,
                      int val, int test, std::uint64_t seed) {
  SceneGenConfig scene;
  scene.width = w;
  scene.height = h;
  scene.fx = scene.fy = 0.9375 * h;
  scene.seed = seed;
  const int total = train + val + test;
  const Dataset ds = generate_dataset(scene, total, double(train) / total,
                                      double(val) / total);
  const fs::path dir = g_base / name;
  write_dataset(ds, dir.string());
  return dir;
}

// ---- criterion 1: finite-difference gradient soundness --------------------

struct OpCheck {
  std::string name;
  oracle::FdReport report;
};

// Scalar projection that breaks permutation symmetry: sum(out * fixed_random).
Tensor project(const Tensor& out, const Tensor& weights) {
  return sum(mul(out, weights));
}

Outcome criterion_grad() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<OpCheck> checks;

  auto run = [&](const std::string& name,
                 const std::function<Tensor()>& rebuild,
                 std::vector<Tensor> leaves) {
    auto rep = oracle::fd_check(rebuild, std::move(leaves), kFdStep);
    if (!checks.empty() && checks.back().name == name) {
      checks.back().report.max_rel_err =
          std::max(checks.back().report.max_rel_err, rep.max_rel_err);
      checks.back().report.checked += rep.checked;
    } else {
      checks.push_back({name, rep});
    }
  };

  Rng rng = Rng::seeded(0xACC1);
  for (int rep = 0; rep < 5; ++rep) {
    const int c = 2 + int(rng.uniform_int(0, 1));
    const int h = 3 + int(rng.uniform_int(0, 2));
    const int w = 3 + int(rng.uniform_int(0, 2));
    const Shape shape{c, h, w};
    Tensor x = rand_t(shape, rng, -1.0, 1.0);
    Tensor y = rand_t(shape, rng, -1.0, 1.0);
    Tensor proj = rand_t(shape, rng, -1.0, 1.0, false);

    run("add", [&] { return project(add(x, y), proj); }, {x, y});
    run("sub", [&] { return project(sub(x, y), proj); }, {x, y});
    run("mul", [&] { return project(mul(x, y), proj); }, {x, y});
    run("neg", [&] { return project(neg(x), proj); }, {x});
    run("sigmoid", [&] { return project(sigmoid(x), proj); }, {x});
    run("silu", [&] { return project(silu(x), proj); }, {x});
    run("atan", [&] { return project(utm::atan(x), proj); }, {x});
    run("square", [&] { return project(square(x), proj); }, {x});
    run("add_scalar", [&] { return project(add_scalar(x, real(0.7)), proj); },
        {x});
    run("mul_scalar", [&] { return project(mul_scalar(x, real(-1.3)), proj); },
        {x});
    run("sum", [&] { return sum(x); }, {x});
    run("mean", [&] { return mean(x); }, {x});
    run("spatial_softmax", [&] { return project(spatial_softmax(x), proj); },
        {x});
    run("instance_norm", [&] { return project(instance_norm(x), proj); },
        {x});

    // div: denominator bounded away from zero
    {
      Tensor d = rand_t(shape, rng, 0.4, 1.6);
      for (auto& v : d.values())
        if (rng.uniform(0, 1) < 0.5) v = -v;
      run("div", [&] { return project(div(x, d), proj); }, {x, d});
    }
    // minimum/maximum: re-randomize so ties stay improbable
    {
      Tensor a = rand_t(shape, rng, -1.0, 1.0);
      Tensor b = rand_t(shape, rng, -1.0, 1.0);
      run("minimum", [&] { return project(minimum(a, b), proj); }, {a, b});
      run("maximum", [&] { return project(maximum(a, b), proj); }, {a, b});
    }
    // relu/sqrt: keep inputs clear of the kink / domain edge
    {
      Tensor r = rand_t(shape, rng, 0.05, 1.0);
      for (auto& v : r.values())
        if (rng.uniform(0, 1) < 0.5) v = -v;
      run("relu", [&] { return project(relu(r), proj); }, {r});
      Tensor s = rand_t(shape, rng, 0.1, 2.0);
      run("sqrt", [&] { return project(utm::sqrt(s), proj); }, {s});
    }
    // dropout: mask fixed by reseeding inside the rebuild
    {
      const std::uint64_t mask_seed = rng.split(7).uniform_int(1, 1 << 30);
      run("dropout",
          [&, mask_seed] {
            Rng mask_rng = Rng::seeded(mask_seed);
            return project(dropout(x, real(0.3), true, mask_rng), proj);
          },
          {x});
    }
    // channel_bias / channel_affine
    {
      Tensor bias = rand_t({c}, rng, -0.5, 0.5);
      Tensor gamma = rand_t({c}, rng, 0.5, 1.5);
      Tensor beta = rand_t({c}, rng, -0.5, 0.5);
      run("channel_bias", [&] { return project(channel_bias(x, bias), proj); },
          {x, bias});
      run("channel_affine",
          [&] { return project(channel_affine(x, gamma, beta), proj); },
          {x, gamma, beta});
    }
    // stack_mean / stack_var over 3 samples
    {
      std::vector<Tensor> stack = {rand_t(shape, rng, -1, 1),
                                   rand_t(shape, rng, -1, 1),
                                   rand_t(shape, rng, -1, 1)};
      run("stack_mean", [&] { return project(stack_mean(stack), proj); },
          stack);
      run("stack_var", [&] { return project(stack_var(stack), proj); }, stack);
    }
    // concat_channels
    {
      Tensor top = rand_t({1, h, w}, rng, -1, 1);
      Tensor cproj = rand_t({c + 1, h, w}, rng, -1, 1, false);
      run("concat_channels",
          [&] { return project(concat_channels({x, top}), cproj); }, {x, top});
    }
    // gather with repeated indices
    {
      std::vector<std::size_t> idx;
      const std::size_t n = std::size_t(c) * h * w;
      for (int i = 0; i < 24; ++i)
        idx.push_back(std::size_t(rng.uniform_int(0, int(n) - 1)));
      Tensor gproj = rand_t({int(idx.size())}, rng, -1, 1, false);
      run("gather",
          [&] { return project(gather(x, idx), gproj); }, {x});
    }
    // bce_with_logits_mean against fixed targets
    {
      std::vector<real> targets(std::size_t(c) * h * w);
      for (auto& t : targets) t = real(rng.uniform(0, 1));
      run("bce_with_logits_mean",
          [&] { return bce_with_logits_mean(x, targets); }, {x});
    }
    // conv2d, stride 1 and stride 2
    {
      Tensor cin = rand_t({2, 6, 6}, rng, -1, 1);
      Tensor ker = rand_t({3, 2, 3, 3}, rng, -0.5, 0.5);
      Tensor p1 = rand_t({3, 6, 6}, rng, -1, 1, false);
      Tensor p2 = rand_t({3, 3, 3}, rng, -1, 1, false);
      run("conv2d",
          [&] { return project(conv2d(cin, ker, 1, 1), p1); }, {cin, ker});
      run("conv2d",
          [&] { return project(conv2d(cin, ker, 2, 1), p2); }, {cin, ker});
    }
  }

  // Composite: two sampled feature stacks through uncertainty-guided fusion
  // and the detection head into the full loss.
  double composite_err = 0;
  std::size_t composite_checked = 0;
  {
    Rng crng = Rng::seeded(0xACC2);
    FeatureStack fm, fa;
    fm.branch_tag = "main";
    fa.branch_tag = "auxiliary";
    for (int i = 0; i < 2; ++i) {
      fm.samples.push_back(rand_t({128, 4, 4}, crng, -1, 1));
      fa.samples.push_back(rand_t({128, 4, 4}, crng, -1, 1));
    }
    MdnModel head = build_mdn(crng);
    const AnchorSet anchors = AnchorSet::fallback();
    const MdnConfig mdn_cfg;
    const std::vector<BBox> gts = {{8, 6, 24, 28}};

    std::vector<Tensor> leaves;
    for (auto& s : fm.samples) leaves.push_back(s);
    for (auto& s : fa.samples) leaves.push_back(s);
    for (int s = 0; s < 3; ++s) leaves.push_back(head.head_bias[s]);
    leaves.push_back(head.down16.gamma);
    leaves.push_back(head.down16.beta);

    auto rebuild = [&] {
      const FusedFeature fused = ugf_fuse(fm, fa);
      const auto raw = mdn_forward(head, fused.map);
      return detection_loss(raw, gts, anchors, mdn_cfg);
    };
    auto rep = oracle::fd_check(rebuild, leaves, kFdStep);
    composite_err = rep.max_rel_err;
    composite_checked = rep.checked;
  }

  double worst = composite_err;
  std::string worst_name = "composite";
  bool enough = composite_checked >= kGradCasesPerOp;
  for (const auto& c : checks) {
    if (c.report.max_rel_err > worst) {
      worst = c.report.max_rel_err;
      worst_name = c.name;
    }
    enough = enough && c.report.checked >= std::size_t(kGradCasesPerOp);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  const bool ok = worst < kFdTol && enough && secs < 300.0;
  return {ok, fmt("%zu ops + composite (%zu elements), worst rel err %.2e "
                  "(%s), tol %.0e, %.0fs",
                  checks.size(), composite_checked, worst, worst_name.c_str(),
                  kFdTol, secs)};
}

// ---- criterion 2: fusion weight normalization ------------------------------

Outcome criterion_ugf() {
  Rng rng = Rng::seeded(0xACC3);
  int checked = 0, degenerate = 0;
  double worst_sum = 0, worst_uniform = 0;
  for (int i = 0; i < kUgfStacks; ++i) {
    const int n = 2 + int(rng.uniform_int(0, 3));
    const int c = 1 + int(rng.uniform_int(0, 2));
    const int h = 2 + int(rng.uniform_int(0, 3));
    const int w = 2 + int(rng.uniform_int(0, 3));
    const bool make_degenerate = i % 10 == 0;

    auto make_stack = [&](const char* tag) {
      FeatureStack st;
      st.branch_tag = tag;
      Tensor first = rand_t({c, h, w}, rng, -2, 2, false);
      for (int s = 0; s < n; ++s)
        st.samples.push_back(make_degenerate
                                 ? first
                                 : rand_t({c, h, w}, rng, -2, 2, false));
      return st;
    };
    const FeatureStack fm = make_stack("main");
    const FeatureStack fa = make_stack("auxiliary");
    const FusedFeature fused = ugf_fuse(fm, fa, true);
    if (!fused.weight_maps.has_value())
      return {false, "weight maps not returned"};

    for (const Tensor* wmap : {&fused.weight_maps->first,
                               &fused.weight_maps->second}) {
      const auto& vals = wmap->values();
      for (real v : vals)
        if (v < 0) return {false, fmt("negative weight %g", double(v))};
      for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int p = 0; p < h * w; ++p)
          s += double(vals[std::size_t(ch) * h * w + p]);
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        if (make_degenerate) {
          const double uniform = 1.0 / (h * w);
          for (int p = 0; p < h * w; ++p)
            worst_uniform = std::max(
                worst_uniform,
                std::abs(double(vals[std::size_t(ch) * h * w + p]) - uniform));
        }
      }
    }
    ++checked;
    degenerate += make_degenerate;
  }
  const bool ok = worst_sum <= kUgfSumTol && worst_uniform <= kUgfUniformTol;
  return {ok, fmt("%d stacks (%d degenerate): worst |channel sum - 1| %.2e "
                  "(tol %.0e), worst degenerate deviation %.2e (tol %.0e)",
                  checked, degenerate, worst_sum, kUgfSumTol, worst_uniform,
                  kUgfUniformTol)};
}

// ---- criterion 3: projection round trip + raster oracle --------------------

SensorRig rotated_rig() {
  SensorRig rig = SensorRig::centered(160, 128, 120.0, 118.0);
  const double a = 10.0 * 3.14159265358979323846 / 180.0;
  // yaw about the camera y axis plus a small translation
  rig.extrinsic = {std::cos(a), 0, std::sin(a), 0.05,
                   0,           1, 0,           -0.02,
                   -std::sin(a), 0, std::cos(a), 0.10};
  rig.validate();
  return rig;
}

Outcome criterion_projection() {
  const SensorRig rigs[2] = {SensorRig::centered(160, 128, 120.0, 120.0),
                             rotated_rig()};
  Rng rng = Rng::seeded(0xACC4);
  double worst = 0;
  for (int i = 0; i < kRoundTripPoints; ++i) {
    const SensorRig& rig = rigs[i % 2];
    const double u = rng.uniform(0, rig.width - 1e-6);
    const double v = rng.uniform(0, rig.height - 1e-6);
    const double depth = rng.uniform(0.3, 9.5);
    const RadarPoint p = backproject(u, v, depth, rig);
    const auto hit = project_point(p, rig);
    if (!hit) return {false, fmt("in-frame point lost at u=%.2f v=%.2f", u, v)};
    const RadarPoint q = backproject(hit->u, hit->v, hit->depth, rig);
    const double err = std::sqrt((p.x - q.x) * (p.x - q.x) +
                                 (p.y - q.y) * (p.y - q.y) +
                                 (p.z - q.z) * (p.z - q.z));
    worst = std::max(worst, err);
    worst = std::max(worst, std::abs(hit->u - u));
    worst = std::max(worst, std::abs(hit->v - v));
    worst = std::max(worst, std::abs(hit->depth - depth));
  }
  if (worst > kRoundTripTol)
    return {false, fmt("round-trip error %.2e exceeds %.0e", worst,
                       kRoundTripTol)};

  // Raster against a per-pixel min-depth oracle, exact comparison.
  int clouds = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const SensorRig& rig = rigs[trial % 2];
    std::vector<RadarPoint> cloud;
    const int n = 200 + int(rng.uniform_int(0, 1300));
    for (int i = 0; i < n; ++i)
      cloud.push_back({rng.uniform(-6, 6), rng.uniform(-4, 4),
                       rng.uniform(-2, 12)});
    const DepthImage img = project_cloud(cloud, rig);

    std::vector<real> want(std::size_t(rig.width) * rig.height, real(0));
    for (const auto& p : cloud) {
      const auto& e = rig.extrinsic;
      const double qx = e[0] * p.x + e[1] * p.y + e[2] * p.z + e[3];
      const double qy = e[4] * p.x + e[5] * p.y + e[6] * p.z + e[7];
      const double qz = e[8] * p.x + e[9] * p.y + e[10] * p.z + e[11];
      if (qz <= 0) continue;
      const long pu = std::lround(rig.fx * qx / qz + rig.cx);
      const long pv = std::lround(rig.fy * qy / qz + rig.cy);
      if (pu < 0 || pu >= rig.width || pv < 0 || pv >= rig.height) continue;
      real& cell = want[std::size_t(pv) * rig.width + pu];
      if (cell == real(0) || real(qz) < cell) cell = real(qz);
    }
    const auto& got = img.values();
    for (std::size_t i = 0; i < want.size(); ++i)
      if (got[i] != want[i])
        return {false, fmt("raster mismatch at pixel %zu: %g vs %g", i,
                           double(got[i]), double(want[i]))};
    ++clouds;
  }
  return {true, fmt("%d round trips worst err %.2e (tol %.0e); %d clouds "
                    "match the min-depth oracle exactly",
                    kRoundTripPoints, worst, kRoundTripTol, clouds)};
}

// ---- criterion 4: NMS equivalence ------------------------------------------

Outcome criterion_nms() {
  Rng rng = Rng::seeded(0xACC5);
  int compared = 0;
  for (int frame = 0; frame < kNmsFrames; ++frame) {
    const int n = int(rng.uniform_int(0, 60));
    std::vector<Detection> dets;
    std::vector<std::array<double, 5>> rows;
    std::vector<int> ranks(n);
    for (int i = 0; i < n; ++i) ranks[i] = i;
    for (int i = n - 1; i > 0; --i)
      std::swap(ranks[i], ranks[int(rng.uniform_int(0, i))]);
    for (int i = 0; i < n; ++i) {
      // clustered boxes so suppression actually happens
      const double cx = rng.uniform(5, 60);
      const double cy = rng.uniform(5, 60);
      const double w = rng.uniform(4, 20);
      const double h = rng.uniform(4, 20);
      const double conf = (ranks[i] + 1) / double(n + 1);
      dets.push_back({{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}, conf});
      rows.push_back({cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, conf});
    }
    for (int t = 0; t <= 12; ++t) {
      const double thr = 0.30 + 0.05 * t;
      const std::vector<Detection> kept = nms(dets, thr);
      const std::vector<std::size_t> want_idx = oracle::nms_reference(rows, thr);
      if (kept.size() != want_idx.size())
        return {false, fmt("frame %d thr %.2f: kept %zu vs reference %zu",
                           frame, thr, kept.size(), want_idx.size())};
      for (std::size_t k = 0; k < kept.size(); ++k) {
        const auto& a = kept[k];
        const auto& b = rows[want_idx[k]];
        if (a.box.x_min != b[0] || a.box.y_min != b[1] || a.box.x_max != b[2] ||
            a.box.y_max != b[3] || a.confidence != b[4])
          return {false, fmt("frame %d thr %.2f: kept set differs at rank %zu",
                             frame, thr, k)};
      }
      ++compared;
    }
  }
  return {true, fmt("%d frames x 13 thresholds (0.30..0.90), %d comparisons, "
                    "all set-exact against the O(n^2) reference",
                    kNmsFrames, compared)};
}

// ---- criterion 5: metrics oracle -------------------------------------------

Outcome criterion_metrics() {
  // IoU fixtures
  {
    const double got = iou({0, 0, 2, 2}, {1, 1, 3, 3});
    if (std::abs(got - 1.0 / 7.0) > kMetricsTol)
      return {false, fmt("iou fixture: %.12f vs %.12f", got, 1.0 / 7.0)};
    if (iou({0, 0, 2, 2}, {0, 0, 2, 2}) != 1.0)
      return {false, "identical boxes must give IoU exactly 1"};
    if (iou({0, 0, 2, 2}, {5, 5, 6, 6}) != 0.0)
      return {false, "disjoint boxes must give IoU exactly 0"};
  }

  // Hand fixture: 2 ground truths, 3 detections (hit, false positive, hit).
  {
    const std::vector<BBox> gts = {{0, 0, 10, 10}, {20, 20, 30, 30}};
    const std::vector<Detection> dets = {{{0, 0, 10, 10}, 0.9},
                                         {{50, 50, 60, 60}, 0.8},
                                         {{20, 20, 30, 30}, 0.7}};
    const MatchResult m = match_detections(dets, gts, 0.5);
    if (m.true_positives != 2 || m.false_positives != 1 ||
        m.false_negatives != 0)
      return {false, fmt("match fixture: tp=%d fp=%d fn=%d", m.true_positives,
                         m.false_positives, m.false_negatives)};
    const auto curve = pr_curve(m.scored, int(gts.size()));
    // points: (1, 0.5), (0.5, 0.5), (2/3, 1)
    const double want_ap = (51.0 * 1.0 + 50.0 * (2.0 / 3.0)) / 101.0;
    const double got_ap = average_precision(curve);
    if (std::abs(got_ap - want_ap) > kMetricsTol)
      return {false, fmt("AP fixture: %.12f vs hand value %.12f", got_ap,
                         want_ap)};
    const double got_oracle = oracle::ap_101_envelope(curve);
    if (std::abs(got_ap - got_oracle) > kMetricsTol)
      return {false, fmt("AP vs envelope oracle: %.12f vs %.12f", got_ap,
                         got_oracle)};
    const double got_f1 = max_f1(curve);
    if (std::abs(got_f1 - 0.8) > kMetricsTol)
      return {false, fmt("max F1 fixture: %.12f vs 0.8", got_f1)};
  }

  // Perfect detector on random non-overlapping layouts.
  {
    Rng rng = Rng::seeded(0xACC6);
    std::vector<std::vector<Detection>> dets;
    std::vector<std::vector<BBox>> gts;
    for (int f = 0; f < 50; ++f) {
      std::vector<BBox> frame_gts;
      std::vector<Detection> frame_dets;
      const int n = 1 + int(rng.uniform_int(0, 5));
      for (int i = 0; i < n && frame_gts.size() < 6; ++i) {
        const double gx = 30.0 * (i % 3), gy = 30.0 * (i / 3);
        const BBox b = {gx + 2, gy + 2, gx + 2 + rng.uniform(8, 24),
                        gy + 2 + rng.uniform(8, 24)};
        frame_gts.push_back(b);
        frame_dets.push_back({b, 0.99 - 0.001 * i});
      }
      gts.push_back(frame_gts);
      dets.push_back(frame_dets);
    }
    const EvalReport rep = evaluate(dets, gts, 0.6);
    if (std::abs(rep.map_50_95 - 1.0) > kMetricsTol ||
        std::abs(rep.mmf1_50_95 - 1.0) > kMetricsTol)
      return {false, fmt("perfect detector: mAP %.12f mmF1 %.12f",
                         rep.map_50_95, rep.mmf1_50_95)};
  }
  return {true, fmt("IoU / matching / PR / AP / mF1 fixtures exact to %.0e; "
                    "perfect detector scores mAP_50:95 = 1.0",
                    kMetricsTol)};
}

// ---- criterion 6: desk-scale end-to-end ------------------------------------

RunConfig desk_config(const fs::path& data, const fs::path& out, int epochs,
                      int passes, std::uint64_t seed) {
  RunConfig cfg;
  cfg.dataset_dir = data.string();
  cfg.output_dir = out.string();
  cfg.epochs = epochs;
  cfg.bfe.forward_passes = passes;
  cfg.seed = seed;
  return cfg;
}

Outcome criterion_desk() {
  const fs::path data = make_dataset("desk_data", kDeskW, kDeskH, kDeskTrain,
                                     kDeskVal, kDeskTest, 1234);
  const RunConfig cfg =
      desk_config(data, g_base / "desk_run", kDeskEpochs, kDeskPasses, 1234);

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult res;
  try {
    res = train_run(cfg, &std::cerr);
  } catch (const TrainError& e) {
    return {false, fmt("training aborted: %s", e.what())};
  }
  const double train_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  EvalOptions opts;
  opts.split = "test";
  const EvalRun test = evaluate_checkpoint(res.checkpoint_path, cfg.dataset_dir,
                                           opts, (g_base / "desk_eval").string());
  const double ap50 = test.report.ap_at(0.50);

  // compare subcommand, reduced scale, through the CLI
  const fs::path cmp_data = make_dataset("cmp_data", 64, 64, 10, 3, 3, 71);
  const fs::path cmp_out = g_base / "cmp_run";
  const std::string cmd =
      "\"" + g_cli + "\" compare" + " --set dataset_dir=" + cmp_data.string() +
      " --set output_dir=" + cmp_out.string() +
      " --set epochs=1 --set batch_size=2 --set bfe.forward_passes=2" +
      " > " + (g_base / "cmp_stdout.txt").string();
  const int rc = std::system(cmd.c_str());
  const std::string table = slurp(cmp_out / "compare.txt");
  const bool cmp_ok = rc == 0 && table.find("ugf") != std::string::npos &&
                      table.find("va") != std::string::npos &&
                      table.find("am") != std::string::npos &&
                      table.find("sod") != std::string::npos &&
                      table.find("mAP_50:95") != std::string::npos;

  // direction of effect, reported but not gated
  std::string direction;
  {
    const fs::path dir_data = make_dataset("dir_data", kDeskW, kDeskH,
                                           kDirTrain, kDirVal, kDirTest, 555);
    double ugf_sum = 0, va_sum = 0;
    int wins = 0;
    std::string cells;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      double pair_map[2] = {0, 0};
      int k = 0;
      for (FusionStrategy strat : {FusionStrategy::kUgf, FusionStrategy::kVa}) {
        RunConfig c = desk_config(
            dir_data,
            g_base / fmt("dir_%s_%llu", strategy_name(strat).c_str(),
                         (unsigned long long)seed),
            kDirEpochs, kDeskPasses, seed);
        c.strategy = strat;
        const TrainResult r = train_run(c);
        EvalOptions dopts;
        dopts.split = "test";
        const EvalRun e = evaluate_checkpoint(
            r.checkpoint_path, c.dataset_dir, dopts,
            (fs::path(c.output_dir) / "eval").string());
        pair_map[k++] = e.report.map_50_95;
      }
      ugf_sum += pair_map[0];
      va_sum += pair_map[1];
      wins += pair_map[0] >= pair_map[1];
      cells += fmt(" seed%llu ugf %.3f va %.3f;", (unsigned long long)seed,
                   pair_map[0], pair_map[1]);
    }
    direction = fmt("direction of effect (reported, %d epochs, %d/%d/%d): "
                    "ugf mean %.3f vs va mean %.3f, ugf >= va in %d/3 seeds "
                    "(%s)",
                    kDirEpochs, kDirTrain, kDirVal, kDirTest, ugf_sum / 3,
                    va_sum / 3, wins, cells.c_str());
  }

  const bool ok = train_secs <= kDeskTimeBudget && ap50 >= kDeskAp50Gate &&
                  cmp_ok;
  return {ok, fmt("%d/%d/%d @ %dx%d, %d epochs, %d MC passes: trained in "
                  "%.0fs (budget %.0fs), test AP_50 %.3f (gate %.2f), "
                  "mAP_50:95 %.3f; compare table %s. %s",
                  kDeskTrain, kDeskVal, kDeskTest, kDeskW, kDeskH, kDeskEpochs,
                  kDeskPasses, train_secs, kDeskTimeBudget, ap50, kDeskAp50Gate,
                  test.report.map_50_95, cmp_ok ? "ok" : "MISSING",
                  direction.c_str())};
}

// ---- criterion 7: ablation harness -----------------------------------------

Outcome criterion_ablation() {
  const fs::path data = make_dataset("abl_data", kAblW, kAblH, kAblTrain,
                                     kAblVal, kAblTest, 99);

  RunConfig cfg = desk_config(data, g_base / "abl_layers", kAblEpochs, 3, 42);
  const std::vector<std::set<int>> layer_grid = {
      {5}, {4, 5}, {3, 4, 5}, {2, 3, 4, 5}, {1, 2, 3, 4, 5}};
  const auto layer_cells = ablate_run(cfg, layer_grid, {0.2}, {3});
  if (layer_cells.size() != 5)
    return {false, fmt("layer grid produced %zu cells", layer_cells.size())};
  const std::string layer_table =
      format_layer_table(layer_cells, cfg.bfe.blocks());
  // one row per layer set, block check marks matching the set size
  {
    std::istringstream in(layer_table);
    std::string line;
    std::getline(in, line);
    if (line.find("mAP_50:95") == std::string::npos)
      return {false, "layer table header lacks the metric column"};
    int row = 0;
    while (std::getline(in, line)) {
      const int marks = int(std::count(line.begin(), line.end(), 'x'));
      if (marks != int(layer_grid[std::size_t(row)].size()))
        return {false, fmt("layer row %d has %d marks, want %zu", row, marks,
                           layer_grid[std::size_t(row)].size())};
      ++row;
    }
    if (row != 5) return {false, fmt("layer table has %d rows", row)};
  }

  cfg.output_dir = (g_base / "abl_rates").string();
  const auto p_cells =
      ablate_run(cfg, {{4, 5}}, {0.05, 0.10, 0.15, 0.20, 0.25}, {3});
  if (p_cells.size() != 5)
    return {false, fmt("p grid produced %zu cells", p_cells.size())};
  const std::string p_table = format_p_table(p_cells);
  for (const char* col : {"p=0.05", "p=0.1", "p=0.15", "p=0.2", "p=0.25"})
    if (p_table.find(col) == std::string::npos)
      return {false, fmt("p table lacks column %s", col)};
  if (p_table.find("mAP_50:95") == std::string::npos ||
      p_table.find("mmF1_50:95") == std::string::npos)
    return {false, "p table lacks metric rows"};

  for (const auto& c : layer_cells)
    if (!std::isfinite(c.map_50_95) || c.map_50_95 < 0 || c.map_50_95 > 1)
      return {false, "layer cell metric out of range"};
  for (const auto& c : p_cells)
    if (!std::isfinite(c.map_50_95) || c.map_50_95 < 0 || c.map_50_95 > 1)
      return {false, "p cell metric out of range"};

  return {true, fmt("layer grid {5}..{1..5} and p grid 0.05..0.25 ran at %d "
                    "epochs on %d/%d/%d @ %dx%d; both tables shaped as "
                    "expected",
                    kAblEpochs, kAblTrain, kAblVal, kAblTest, kAblW, kAblH)};
}

// ---- criterion 8: bitwise reproducibility ----------------------------------

Outcome criterion_repro() {
  const fs::path data = make_dataset("repro_data", 64, 64, 4, 2, 2, 7);
  RunConfig cfg = desk_config(data, g_base / "repro_a", 2, 2, 7);
  cfg.batch_size = 2;
  const TrainResult a = train_run(cfg);
  cfg.output_dir = (g_base / "repro_b").string();
  const TrainResult b = train_run(cfg);

  const std::string ck_a = slurp(a.checkpoint_path);
  const std::string ck_b = slurp(b.checkpoint_path);
  if (ck_a.empty() || ck_a != ck_b)
    return {false, "checkpoints differ between identically seeded runs"};

  EvalOptions opts;
  opts.split = "test";
  evaluate_checkpoint(a.checkpoint_path, cfg.dataset_dir, opts,
                      (g_base / "repro_eval_a").string());
  evaluate_checkpoint(b.checkpoint_path, cfg.dataset_dir, opts,
                      (g_base / "repro_eval_b").string());
  const std::string rep_a = slurp(g_base / "repro_eval_a" / "report_kv.txt");
  const std::string rep_b = slurp(g_base / "repro_eval_b" / "report_kv.txt");
  if (rep_a.empty() || rep_a != rep_b)
    return {false, "evaluation reports differ between runs"};

  return {true, fmt("two seeded runs: best.ckpt identical (%zu bytes) and "
                    "report_kv.txt identical (%zu bytes)",
                    ck_a.size(), rep_a.size())};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: utm_acceptance <path-to-utm-cli>\n";
    return 64;
  }
  g_cli = argv[1];
  g_base = fs::temp_directory_path() / "utm_acceptance";
  fs::remove_all(g_base);
  fs::create_directories(g_base);

  struct Criterion {
    int number;
    const char* title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient soundness", criterion_grad},
      {2, "fusion weight normalization", criterion_ugf},
      {3, "projection fidelity", criterion_projection},
      {4, "NMS oracle equivalence", criterion_nms},
      {5, "metrics oracle", criterion_metrics},
      {6, "desk-scale end-to-end", criterion_desk},
      {7, "ablation harness", criterion_ablation},
      {8, "reproducibility", criterion_repro},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (out.ok ? "[PASS]" : "[FAIL]") << " criterion " << c.number
              << " (" << c.title << "): " << out.detail << "\n"
              << std::flush;
    failed += !out.ok;
  }
  std::cout << "acceptance: " << (8 - failed) << "/8 criteria passed\n";
  return failed;
}
