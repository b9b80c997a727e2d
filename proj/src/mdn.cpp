#include "utm/mdn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include "utm/metrics.hpp"

namespace utm {

namespace {

constexpr int kComponents = 5;  // tx, ty, tw, th, obj
constexpr int kAnchorsPerScale = 3;
constexpr int kRawChannels = kComponents * kAnchorsPerScale;

double sigmoid_d(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

void AnchorSet::validate() const {
  check_arg(strides[0] == 8 && strides[1] == 16 && strides[2] == 32,
            "anchor set: strides must be 8/16/32");
  for (const auto& scale : anchors)
    for (const auto& [w, h] : scale)
      check_arg(std::isfinite(w) && std::isfinite(h) && w > 0 && h > 0,
                "anchor set: anchor dimensions must be positive");
}

AnchorSet AnchorSet::fallback() {
  const std::array<std::pair<double, double>, 3> base{
      {{10.0, 24.0}, {20.0, 48.0}, {36.0, 86.0}}};
  AnchorSet s;
  for (int sc = 0; sc < 3; ++sc) {
    const double scale = s.strides[sc] / 8.0;
    for (int a = 0; a < 3; ++a)
      s.anchors[sc][a] = {base[a].first * scale, base[a].second * scale};
  }
  return s;
}

AnchorSet AnchorSet::from_boxes(const std::vector<BBox>& boxes) {
  std::vector<std::pair<double, double>> wh;
  wh.reserve(boxes.size());
  for (const BBox& b : boxes) {
    check_arg(b.valid(), "anchor k-means: degenerate box");
    wh.emplace_back(b.width(), b.height());
  }
  {
    auto distinct = wh;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 9) return fallback();
  }

  constexpr int k = 9;
  std::sort(wh.begin(), wh.end(),
            [](const auto& a, const auto& b) {
              const double aa = a.first * a.second, bb = b.first * b.second;
              return aa != bb ? aa < bb : a < b;
            });
  const int n = static_cast<int>(wh.size());
  std::array<std::pair<double, double>, k> centroid;
  for (int i = 0; i < k; ++i) centroid[i] = wh[(2 * i + 1) * n / (2 * k)];

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool moved = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dw = wh[i].first - centroid[c].first;
        const double dh = wh[i].second - centroid[c].second;
        const double d = dw * dw + dh * dh;
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        moved = true;
      }
    }
    if (!moved) break;
    for (int c = 0; c < k; ++c) {
      double sw = 0, sh = 0;
      int cnt = 0;
      for (int i = 0; i < n; ++i)
        if (assign[i] == c) {
          sw += wh[i].first;
          sh += wh[i].second;
          ++cnt;
        }
      if (cnt > 0) centroid[c] = {sw / cnt, sh / cnt};
    }
  }

  std::sort(centroid.begin(), centroid.end(),
            [](const auto& a, const auto& b) {
              const double aa = a.first * a.second, bb = b.first * b.second;
              return aa != bb ? aa < bb : a < b;
            });
  AnchorSet s;
  for (int sc = 0; sc < 3; ++sc)
    for (int a = 0; a < 3; ++a) s.anchors[sc][a] = centroid[3 * sc + a];
  s.validate();
  return s;
}

void MdnConfig::validate() const {
  check_arg(lambda_box >= 0 && lambda_obj >= 0,
            "detection loss weights must be non-negative");
  for (real b : obj_balance)
    check_arg(b > 0, "objectness balance weights must be positive");
  check_arg(match_ratio_limit > 1.0, "anchor match ratio limit must exceed 1");
}

std::vector<std::pair<std::string, Tensor>> MdnModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  down16.collect("mdn.down16", out);
  down32.collect("mdn.down32", out);
  for (int s = 0; s < 3; ++s) {
    const std::string p = "mdn.head" + std::to_string(s);
    head_stem[s].collect(p + ".stem", out);
    out.emplace_back(p + ".kernel", head_kernel[s]);
    out.emplace_back(p + ".bias", head_bias[s]);
  }
  return out;
}

std::vector<Tensor> MdnModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

MdnModel build_mdn(Rng& rng) {
  MdnModel m;
  m.down16 = ConvBlock::make(128, 128, 3, 2, rng);
  m.down32 = ConvBlock::make(128, 128, 3, 2, rng);
  // Objectness biases start at the logit of a 1% positive prior so the head
  // does not spend its first few hundred steps suppressing every cell.
  const real obj_prior = real(std::log(0.01 / 0.99));
  for (int s = 0; s < 3; ++s) {
    m.head_stem[s] = ConvBlock::make(128, 32, 3, 1, rng);
    m.head_kernel[s] = kaiming_uniform({kRawChannels, 32, 1, 1}, rng);
    // Shrink the final projection so logits start at their biases: boxes
    // decode to anchor-shaped cells and objectness sits at the prior. The
    // early objectness push then cannot fling the shared box logits into
    // sigmoid saturation, which they never climb back out of.
    for (real& v : m.head_kernel[s].values()) v *= real(0.01);
    m.head_bias[s] = Tensor::zeros({kRawChannels}, true);
    for (int a = 0; a < kAnchorsPerScale; ++a)
      m.head_bias[s].values()[static_cast<std::size_t>(a) * kComponents + 4] =
          obj_prior;
  }
  return m;
}

std::array<Tensor, 3> mdn_forward(const MdnModel& model, const Tensor& fused) {
  const Shape& s = fused.shape();
  check_shape(s.size() == 3 && s[0] == 128,
              "detection input must be [128, h, w]");
  check_shape(s[1] % 4 == 0 && s[2] % 4 == 0,
              "detection input spatial dims must be divisible by 4");
  // The fusion strategies hand over features at wildly different scales
  // (spatially normalized weight maps shrink the fused map by ~1/(H*W));
  // standardizing per channel here keeps the head's dynamics the same
  // regardless of what feeds it.
  const Tensor p8 = instance_norm(fused);
  const Tensor p16 = model.down16.forward(p8);
  const Tensor p32 = model.down32.forward(p16);
  const std::array<const Tensor*, 3> feats{&p8, &p16, &p32};
  std::array<Tensor, 3> raw;
  for (int i = 0; i < 3; ++i) {
    Tensor t = model.head_stem[i].forward(*feats[i]);
    t = conv2d(t, model.head_kernel[i], 1, 0);
    raw[i] = channel_bias(t, model.head_bias[i]);
  }
  return raw;
}

std::vector<Detection> decode_boxes(const std::array<Tensor, 3>& raw,
                                    const AnchorSet& anchors,
                                    double conf_threshold) {
  anchors.validate();
  check_arg(conf_threshold >= 0.0 && conf_threshold <= 1.0,
            "confidence threshold must be in [0,1]");
  check_shape(raw[0].shape().size() == 3, "raw detection tensor must be rank 3");
  const int image_width = raw[0].dim(2) * anchors.strides[0];
  const int image_height = raw[0].dim(1) * anchors.strides[0];
  std::vector<Detection> dets;
  for (int sc = 0; sc < 3; ++sc) {
    const Shape& s = raw[sc].shape();
    check_shape(s.size() == 3 && s[0] == kRawChannels,
                "raw detection tensor must be [15, h, w]");
    const int h = s[1], w = s[2];
    const int stride = anchors.strides[sc];
    const real* v = raw[sc].values().data();
    const auto at = [&](int c, int y, int x) -> double {
      return static_cast<double>(v[(static_cast<std::size_t>(c) * h + y) * w + x]);
    };
    for (int a = 0; a < kAnchorsPerScale; ++a) {
      const auto [aw, ah] = anchors.anchors[sc][a];
      const int base = a * kComponents;
      for (int gy = 0; gy < h; ++gy) {
        for (int gx = 0; gx < w; ++gx) {
          const double conf = sigmoid_d(at(base + 4, gy, gx));
          if (conf < conf_threshold) continue;
          const double cx =
              (gx + 2.0 * sigmoid_d(at(base + 0, gy, gx)) - 0.5) * stride;
          const double cy =
              (gy + 2.0 * sigmoid_d(at(base + 1, gy, gx)) - 0.5) * stride;
          const double sw = 2.0 * sigmoid_d(at(base + 2, gy, gx));
          const double sh = 2.0 * sigmoid_d(at(base + 3, gy, gx));
          const double bw = aw * sw * sw;
          const double bh = ah * sh * sh;
          const BBox box = BBox{cx - bw / 2, cy - bh / 2, cx + bw / 2,
                                cy + bh / 2}
                               .clipped(image_width, image_height);
          if (!box.valid()) continue;
          dets.push_back({box, conf});
        }
      }
    }
  }
  return dets;
}

std::vector<Detection> nms(const std::vector<Detection>& dets,
                           double iou_threshold) {
  check_arg(iou_threshold >= 0.0 && iou_threshold <= 1.0,
            "nms iou threshold must be in [0,1]");
  std::vector<Detection> sorted = dets;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.confidence > b.confidence;
                   });
  std::vector<Detection> kept;
  for (const Detection& d : sorted) {
    bool suppressed = false;
    for (const Detection& k : kept)
      if (iou(d.box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

namespace {

struct ScaleTargets {
  // parallel arrays, one entry per matched (anchor, cell)
  std::vector<int> anchor, gy, gx;
  std::vector<double> aw, ah;
  std::vector<double> cell_x, cell_y;             // cell corner, grid units
  std::vector<double> gx1, gy1, gx2, gy2;         // gt corners, pixels
  std::vector<double> gw, gh, gcx, gcy, g_atan;   // gt dims / center / atan(w/h)
};

ScaleTargets assign_targets(const std::vector<BBox>& gt, int stride, int h,
                            int w, const std::array<std::pair<double, double>, 3>& anchors,
                            double ratio_limit) {
  ScaleTargets t;
  std::set<std::tuple<int, int, int>> taken;  // (anchor, gy, gx), first gt wins
  for (const BBox& g : gt) {
    const double gw = g.width(), gh = g.height();
    const double fx = (g.x_min + g.x_max) / 2.0 / stride;
    const double fy = (g.y_min + g.y_max) / 2.0 / stride;
    const int cx0 = std::min(static_cast<int>(std::floor(fx)), w - 1);
    const int cy0 = std::min(static_cast<int>(std::floor(fy)), h - 1);

    std::vector<std::pair<int, int>> cells{{cx0, cy0}};
    const double frx = fx - cx0, fry = fy - cy0;
    if (frx < 0.5 && fx > 1.0) cells.emplace_back(cx0 - 1, cy0);
    if (frx > 0.5 && fx < w - 1.0) cells.emplace_back(cx0 + 1, cy0);
    if (fry < 0.5 && fy > 1.0) cells.emplace_back(cx0, cy0 - 1);
    if (fry > 0.5 && fy < h - 1.0) cells.emplace_back(cx0, cy0 + 1);

    for (int a = 0; a < kAnchorsPerScale; ++a) {
      const auto [aw, ah] = anchors[a];
      const double r = std::max(std::max(gw / aw, aw / gw),
                                std::max(gh / ah, ah / gh));
      if (r >= ratio_limit) continue;
      for (const auto& [cx, cy] : cells) {
        if (cx < 0 || cy < 0 || cx >= w || cy >= h) continue;
        if (!taken.insert({a, cy, cx}).second) continue;
        t.anchor.push_back(a);
        t.gy.push_back(cy);
        t.gx.push_back(cx);
        t.aw.push_back(aw);
        t.ah.push_back(ah);
        t.cell_x.push_back(cx);
        t.cell_y.push_back(cy);
        t.gx1.push_back(g.x_min);
        t.gy1.push_back(g.y_min);
        t.gx2.push_back(g.x_max);
        t.gy2.push_back(g.y_max);
        t.gw.push_back(gw);
        t.gh.push_back(gh);
        t.gcx.push_back((g.x_min + g.x_max) / 2.0);
        t.gcy.push_back((g.y_min + g.y_max) / 2.0);
        t.g_atan.push_back(std::atan(gw / gh));
      }
    }
  }
  return t;
}

Tensor const_vec(const std::vector<double>& v) {
  std::vector<real> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = static_cast<real>(v[i]);
  return Tensor::from_values({static_cast<int>(v.size())}, r, false);
}

}  // namespace

Tensor detection_loss(const std::array<Tensor, 3>& raw,
                      const std::vector<BBox>& gt_boxes,
                      const AnchorSet& anchors, const MdnConfig& cfg) {
  cfg.validate();
  anchors.validate();
  for (const BBox& g : gt_boxes)
    check_arg(g.valid(), "detection loss: degenerate ground-truth box");

  Tensor total;
  bool have_total = false;
  const auto accumulate = [&](const Tensor& term) {
    total = have_total ? total + term : term;
    have_total = true;
  };

  for (int sc = 0; sc < 3; ++sc) {
    const Shape& s = raw[sc].shape();
    check_shape(s.size() == 3 && s[0] == kRawChannels,
                "raw detection tensor must be [15, h, w]");
    const int h = s[1], w = s[2];
    const int stride = anchors.strides[sc];
    const ScaleTargets t = assign_targets(gt_boxes, stride, h, w,
                                          anchors.anchors[sc],
                                          cfg.match_ratio_limit);
    const int m = static_cast<int>(t.anchor.size());

    if (m > 0 && cfg.lambda_box > 0) {
      std::vector<std::size_t> itx(m), ity(m), itw(m), ith(m);
      for (int i = 0; i < m; ++i) {
        const int base = t.anchor[i] * kComponents;
        const auto flat = [&](int c) {
          return static_cast<std::size_t>((c * h + t.gy[i]) * w + t.gx[i]);
        };
        itx[i] = flat(base + 0);
        ity[i] = flat(base + 1);
        itw[i] = flat(base + 2);
        ith[i] = flat(base + 3);
      }
      const Tensor cellx = const_vec(t.cell_x), celly = const_vec(t.cell_y);
      const Tensor awt = const_vec(t.aw), aht = const_vec(t.ah);
      const Tensor gx1 = const_vec(t.gx1), gy1 = const_vec(t.gy1);
      const Tensor gx2 = const_vec(t.gx2), gy2 = const_vec(t.gy2);
      const Tensor gcx = const_vec(t.gcx), gcy = const_vec(t.gcy);
      const Tensor gatan = const_vec(t.g_atan);
      std::vector<double> garea(m);
      for (int i = 0; i < m; ++i) garea[i] = t.gw[i] * t.gh[i];
      const Tensor gareat = const_vec(garea);

      const Tensor cx =
          mul_scalar(add_scalar(mul_scalar(sigmoid(gather(raw[sc], itx)), 2), -0.5) + cellx,
                     static_cast<real>(stride));
      const Tensor cy =
          mul_scalar(add_scalar(mul_scalar(sigmoid(gather(raw[sc], ity)), 2), -0.5) + celly,
                     static_cast<real>(stride));
      const Tensor pw = square(mul_scalar(sigmoid(gather(raw[sc], itw)), 2)) * awt;
      const Tensor ph = square(mul_scalar(sigmoid(gather(raw[sc], ith)), 2)) * aht;
      const Tensor x1 = cx - mul_scalar(pw, 0.5);
      const Tensor x2 = cx + mul_scalar(pw, 0.5);
      const Tensor y1 = cy - mul_scalar(ph, 0.5);
      const Tensor y2 = cy + mul_scalar(ph, 0.5);

      const Tensor iw = relu(minimum(x2, gx2) - maximum(x1, gx1));
      const Tensor ih = relu(minimum(y2, gy2) - maximum(y1, gy1));
      const Tensor inter = iw * ih;
      const Tensor uni = pw * ph + gareat - inter;
      const Tensor iou_t = inter / uni;

      const Tensor ew = maximum(x2, gx2) - minimum(x1, gx1);
      const Tensor eh = maximum(y2, gy2) - minimum(y1, gy1);
      const Tensor c2 = add_scalar(square(ew) + square(eh), real(1e-9));
      const Tensor rho2 = square(cx - gcx) + square(cy - gcy);
      const Tensor v = mul_scalar(
          square(gatan - atan(pw / add_scalar(ph, real(1e-12)))),
          static_cast<real>(4.0 / (M_PI * M_PI)));
      // denominator (1 - iou) + v is >= 0 up to float error; clamp, then add
      // the epsilon separately so it survives float rounding near zero
      const Tensor alpha =
          v / add_scalar(relu(add_scalar(v - iou_t, real(1))), real(1e-9));
      const Tensor ciou = iou_t - rho2 / c2 - alpha * v;
      // 1 - ciou >= 0 mathematically; the clamp absorbs float overshoot at
      // perfect fits so the loss keeps its non-negativity contract
      Tensor bterm = mul_scalar(mean(relu(add_scalar(neg(ciou), 1))), cfg.lambda_box);
      if (std::getenv("UTM_LOSS_DEBUG")) {
        std::fprintf(stderr, "[dbg] scale %d box m=%d term=%g\n", sc, m,
                     double(bterm.values()[0]));
        for (int i = 0; i < m; ++i)
          std::fprintf(stderr,
                       "[dbg]   pos a=%d cell=(%d,%d) anchor=%.1fx%.1f "
                       "gt=%.1fx%.1f@(%.1f,%.1f) pred=%.1fx%.1f@(%.1f,%.1f) "
                       "ciou=%g\n",
                       t.anchor[i], t.gx[i], t.gy[i], t.aw[i], t.ah[i],
                       t.gw[i], t.gh[i], t.gcx[i], t.gcy[i],
                       double(pw.values()[std::size_t(i)]),
                       double(ph.values()[std::size_t(i)]),
                       double(cx.values()[std::size_t(i)]),
                       double(cy.values()[std::size_t(i)]),
                       double(ciou.values()[std::size_t(i)]));
      }
      accumulate(bterm);
    }

    if (cfg.lambda_obj > 0) {
      std::vector<std::size_t> obj_idx;
      obj_idx.reserve(static_cast<std::size_t>(kAnchorsPerScale) * h * w);
      std::vector<real> target(static_cast<std::size_t>(kAnchorsPerScale) * h * w,
                               real(0));
      for (int a = 0; a < kAnchorsPerScale; ++a)
        for (int gy = 0; gy < h; ++gy)
          for (int gx = 0; gx < w; ++gx)
            obj_idx.push_back(
                static_cast<std::size_t>(((a * kComponents + 4) * h + gy) * w + gx));
      for (int i = 0; i < m; ++i) {
        const std::size_t pos =
            (static_cast<std::size_t>(t.anchor[i]) * h + t.gy[i]) * w + t.gx[i];
        target[pos] = real(1);
      }
      const Tensor bce = bce_with_logits_mean(gather(raw[sc], obj_idx), target);
      Tensor oterm = mul_scalar(bce, cfg.lambda_obj * cfg.obj_balance[sc]);
      if (std::getenv("UTM_LOSS_DEBUG"))
        std::fprintf(stderr, "[dbg] scale %d obj m=%d term=%g\n", sc, m,
                     double(oterm.values()[0]));
      accumulate(oterm);
    }
  }

  if (!have_total) total = Tensor::zeros({1}, false);
  return total;
}

void write_detections(const std::vector<Detection>& dets,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write detections: " + path);
  char line[160];
  for (const Detection& d : dets) {
    std::snprintf(line, sizeof line, "%.6f %.6f %.6f %.6f %.6f\n", d.box.x_min,
                  d.box.y_min, d.box.x_max, d.box.y_max, d.confidence);
    out << line;
  }
  if (!out.good()) throw IoError("write failed: " + path);
}

std::vector<Detection> load_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("detection file not found: " + path);
  std::vector<Detection> dets;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Detection d;
    std::istringstream ls(line);
    if (!(ls >> d.box.x_min >> d.box.y_min >> d.box.x_max >> d.box.y_max >>
          d.confidence))
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": malformed detection line");
    dets.push_back(d);
  }
  return dets;
}

}  // namespace utm
