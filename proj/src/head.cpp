#include "thn/head.hpp"

#include <algorithm>
#include <cmath>

namespace thn {

namespace {

Tensor kaiming(int c_out, int c_in, int k, double gain, Rng rng) {
  Tensor w(Shape{c_out, c_in, k, k});
  const double std_dev = gain * std::sqrt(2.0 / (static_cast<double>(c_in) * k * k));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.gaussian() * std_dev;
  return w;
}

void add_conv(ParamStore& s, const Rng& rng, const std::string& name, int c_out, int c_in,
              int k, double gain) {
  s.insert(name + ".weight", kaiming(c_out, c_in, k, gain, rng.stream("init." + name + ".weight")));
  s.insert(name + ".bias", Tensor(Shape{c_out, 1, 1, 1}, 0.0));
}

double size_with_context(double w, double h) {
  const double p = (w + h) / 2.0;
  return std::sqrt((w + p) * (h + p));
}

}  // namespace

Head::Head(HeadConfig cfg) : cfg_(cfg) {
  if (cfg_.in_channels < 1 || cfg_.mid_channels < 1)
    throw ConfigError("head: channel counts must be >= 1");
  if (cfg_.stride_scale <= 0.0) throw ConfigError("head: stride_scale must be positive");
}

void Head::init_params(ParamStore& store, const Rng& rng) const {
  add_conv(store, rng, "head.cls.conv1", cfg_.mid_channels, cfg_.in_channels, 3, 1.0);
  // small final-layer weights keep early logits near zero
  add_conv(store, rng, "head.cls.conv2", 2, cfg_.mid_channels, 1, 0.1);
  add_conv(store, rng, "head.reg.conv1", cfg_.mid_channels, cfg_.in_channels, 3, 1.0);
  add_conv(store, rng, "head.reg.conv2", 4, cfg_.mid_channels, 1, 0.1);
  Tensor& rb = store.at("head.reg.conv2.bias");
  for (std::int64_t i = 0; i < rb.size(); ++i) rb[i] = cfg_.reg_bias_init;
}

Head::ClsOut Head::classify(ad::Tape& t, ad::Var fused, const ParamBinding& p) const {
  const Shape fs = t.value(fused).shape();
  if (fs.c != cfg_.in_channels)
    throw DimensionError("head: fused map " + fs.str() + " does not match in_channels " +
                         std::to_string(cfg_.in_channels));
  ad::Var x = t.conv2d(fused, p.at("head.cls.conv1.weight"), p.at("head.cls.conv1.bias"),
                       {.stride = 1, .pad = 1});
  x = t.relu(x);
  ad::Var logits = t.conv2d(x, p.at("head.cls.conv2.weight"), p.at("head.cls.conv2.bias"));
  return ClsOut{logits, t.softmax2(logits)};
}

ad::Var Head::regress_raw(ad::Tape& t, ad::Var fused, const ParamBinding& p) const {
  const Shape fs = t.value(fused).shape();
  if (fs.c != cfg_.in_channels)
    throw DimensionError("head: fused map " + fs.str() + " does not match in_channels " +
                         std::to_string(cfg_.in_channels));
  ad::Var x = t.conv2d(fused, p.at("head.reg.conv1.weight"), p.at("head.reg.conv1.bias"),
                       {.stride = 1, .pad = 1});
  x = t.relu(x);
  return t.conv2d(x, p.at("head.reg.conv2.weight"), p.at("head.reg.conv2.bias"));
}

ad::Var Head::regress(ad::Tape& t, ad::Var fused, const ParamBinding& p) const {
  return t.exp_scale(regress_raw(t, fused, p), cfg_.stride_scale);
}

Tensor make_hann_window(int rows, int cols) {
  auto hann = [](int i, int n) {
    if (n == 1) return 1.0;
    return 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i / (n - 1));
  };
  Tensor w(Shape{1, 1, rows, cols});
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x) w(0, 0, y, x) = hann(y, rows) * hann(x, cols);
  return w;
}

DecodeResult decode(const ScoreMap& scores, const RegressionMap& regs, const BBox& prev,
                    const CropGeometry& crop_geom, const MapGeometry& map_geom,
                    const PenaltyConfig& pen, const Tensor& window) {
  const Shape ps = scores.probs.shape();
  const Shape rs = regs.offsets.shape();
  if (ps.n != 1 || rs.n != 1)
    throw UsageError("decode: single-sequence inference expects batch 1");
  if (ps.h != rs.h || ps.w != rs.w || ps.h != map_geom.rows || ps.w != map_geom.cols)
    throw DimensionError("decode: score map " + ps.str() + ", regression map " + rs.str() +
                         " and geometry grid disagree");
  if (window.shape().h != ps.h || window.shape().w != ps.w)
    throw DimensionError("decode: window shape " + window.shape().str() + " mismatch");

  const double lam = pen.window_influence;
  const double prev_ctx = size_with_context(prev.w, prev.h);
  const double prev_ratio = prev.w / prev.h;

  double best = -1.0;
  int biy = 0, bix = 0;
  for (int iy = 0; iy < ps.h; ++iy) {
    for (int ix = 0; ix < ps.w; ++ix) {
      const double fg = scores.probs(0, 1, iy, ix);
      const double l = regs.offsets(0, 0, iy, ix), tp = regs.offsets(0, 1, iy, ix);
      const double r = regs.offsets(0, 2, iy, ix), b = regs.offsets(0, 3, iy, ix);
      const double cw = (l + r) / crop_geom.scale;  // candidate size, frame px
      const double ch = (tp + b) / crop_geom.scale;
      const double sc = size_with_context(cw, ch) / prev_ctx;
      const double s_c = std::max(sc, 1.0 / sc);
      const double rat = (cw / ch) / prev_ratio;
      const double r_c = std::max(rat, 1.0 / rat);
      const double penalty = std::exp(-(r_c * s_c - 1.0) * pen.penalty_k);
      const double score = (1.0 - lam) * fg * penalty + lam * window(0, 0, iy, ix);
      if (score > best) {
        best = score;
        biy = iy;
        bix = ix;
      }
    }
  }

  const double x = map_geom.point_x(bix), y = map_geom.point_y(biy);
  const double l = regs.offsets(0, 0, biy, bix), tp = regs.offsets(0, 1, biy, bix);
  const double r = regs.offsets(0, 2, biy, bix), b = regs.offsets(0, 3, biy, bix);
  BBox cand_crop = BBox::from_corners(x - l, y - tp, x + r, y + b);
  BBox cand = crop_geom.to_frame(cand_crop);

  DecodeResult out;
  out.best_iy = biy;
  out.best_ix = bix;
  out.confidence = scores.probs(0, 1, biy, bix);

  const double g = pen.size_lr;
  double nw = (1.0 - g) * prev.w + g * cand.w;
  double nh = (1.0 - g) * prev.h + g * cand.h;
  if (nw < 2.0 || nh < 2.0) {
    nw = std::max(nw, 2.0);
    nh = std::max(nh, 2.0);
    out.size_clamped = true;
  }

  // keep the center inside the search region
  const double span = static_cast<double>(map_geom.cols - 1) * map_geom.stride +
                      map_geom.x0 * 2.0;  // crop extent ~ search size - 1
  const double lo_x = crop_geom.to_frame_x(0.0), hi_x = crop_geom.to_frame_x(span);
  const double lo_y = crop_geom.to_frame_y(0.0), hi_y = crop_geom.to_frame_y(span);
  out.box = BBox{std::clamp(cand.cx, lo_x, hi_x), std::clamp(cand.cy, lo_y, hi_y), nw, nh};
  return out;
}

}  // namespace thn
