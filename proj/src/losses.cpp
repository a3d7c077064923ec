#include "thn/losses.hpp"

#include <cmath>

namespace thn {

namespace {

// -ln softmax(l_win | l_win, l_lose), computed as softplus(l_lose - l_win).
double ce_from_margin(double lose_minus_win) {
  const double t = lose_minus_win;
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double huber(double e, double beta) {
  const double a = std::fabs(e);
  return a < beta ? 0.5 * e * e / beta : a - 0.5 * beta;
}

double huber_d(double e, double beta) {
  if (std::fabs(e) < beta) return e / beta;
  return e > 0.0 ? 1.0 : -1.0;
}

}  // namespace

double smooth_l1(std::span<const double> d, std::span<const double> d_hat, double beta) {
  if (beta <= 0.0) throw ConfigError("smooth_l1: beta must be positive");
  if (d.size() != d_hat.size() || d.empty())
    throw DimensionError("smooth_l1: offset lengths differ (" + std::to_string(d.size()) +
                         " vs " + std::to_string(d_hat.size()) + ")");
  double acc = 0.0;
  for (size_t i = 0; i < d.size(); ++i) acc += huber(d[i] - d_hat[i], beta);
  return acc / static_cast<double>(d.size());
}

double reg_loss(std::span<const double> d, std::span<const double> d_hat, double beta,
                const BBox& pred, const BBox& gt) {
  return smooth_l1(d, d_hat, beta) + iou_loss(pred, gt);
}

double corrective_coefficient(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("corrective coefficient: p must lie in (0,1), got " + std::to_string(p));
  const double ce = -std::log(p);
  return 1.0 + std::exp(-ce);
}

double pos_loss(double p, double reg) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("pos_loss: p must lie in (0,1), got " + std::to_string(p));
  const double ce = -std::log(p);
  return ce + (1.0 + std::exp(-ce)) * reg;
}

namespace {

struct SavedLossState {
  LabelAssignment labels;
  MapGeometry geom;
  LossOptions opt;
  double norm = 1.0;
};

}  // namespace

LossResult total_loss(ad::Tape& tape, ad::Var cls_logits, ad::Var reg_raw,
                      const LabelAssignment& labels, const MapGeometry& geom,
                      const LossOptions& opt) {
  const Tensor& L = tape.value(cls_logits);
  const Tensor& R = tape.value(reg_raw);
  const Shape ls = L.shape(), rs = R.shape();
  if (ls.n != 1 || ls.c != 2)
    throw DimensionError("total_loss: logits must be (1,2,h,w), got " + ls.str());
  if (rs.n != 1 || rs.c != 4)
    throw DimensionError("total_loss: regression must be (1,4,h,w), got " + rs.str());
  if (ls.h != labels.rows || ls.w != labels.cols || rs.h != labels.rows || rs.w != labels.cols)
    throw DimensionError("total_loss: map shape " + ls.str() + " does not match labels " +
                         std::to_string(labels.rows) + "x" + std::to_string(labels.cols));
  if (geom.rows != labels.rows || geom.cols != labels.cols)
    throw DimensionError("total_loss: geometry grid does not match labels");

  const int n_pos = labels.count(PointLabel::POS);
  const int n_neg = labels.count(PointLabel::NEG);
  if (n_pos + n_neg == 0) throw TrainingError("total_loss: every point is ignore-labeled");
  if (n_pos > 0 && !labels.has_gt)
    throw UsageError("total_loss: positive labels without a ground-truth box");
  if (opt.frozen_coefficients && static_cast<int>(opt.frozen_coefficients->size()) != n_pos)
    throw UsageError("total_loss: frozen coefficient count does not match positives");

  double norm;
  if (opt.normalizer == LossNormalizer::N_PLUS_M)
    norm = n_pos + n_neg;
  else
    norm = n_pos > 0 ? n_pos : n_neg;

  const double s = opt.stride_scale;
  double ce_pos = 0.0, ce_neg = 0.0, sl1w = 0.0, iouw = 0.0, coef_sum = 0.0;
  int pos_ordinal = 0;
  for (int iy = 0; iy < labels.rows; ++iy) {
    for (int ix = 0; ix < labels.cols; ++ix) {
      const PointLabel lab = labels.at(iy, ix);
      if (lab == PointLabel::IGNORE) continue;
      const double l0 = L(0, 0, iy, ix), l1 = L(0, 1, iy, ix);
      if (lab == PointLabel::NEG) {
        ce_neg += ce_from_margin(l1 - l0);
        continue;
      }
      const double ce = ce_from_margin(l0 - l1);
      ce_pos += ce;
      double w = 1.0;
      if (opt.corrective)
        w = opt.frozen_coefficients ? (*opt.frozen_coefficients)[pos_ordinal]
                                    : 1.0 + std::exp(-ce);
      ++pos_ordinal;
      coef_sum += w;

      double d[4], e[4];
      double sl1 = 0.0;
      for (int k = 0; k < 4; ++k) {
        d[k] = s * std::exp(R(0, k, iy, ix));
        e[k] = (d[k] - labels.d_hat(0, k, iy, ix)) / s;
        sl1 += huber(e[k], opt.beta);
      }
      sl1 *= 0.25;

      const double x = geom.point_x(ix), y = geom.point_y(iy);
      const double px1 = x - d[0], py1 = y - d[1], px2 = x + d[2], py2 = y + d[3];
      const BBox& g = labels.gt;
      const double iw = std::min(px2, g.x2()) - std::max(px1, g.x1());
      const double ih = std::min(py2, g.y2()) - std::max(py1, g.y1());
      double iou_v = 0.0;
      if (iw > 0.0 && ih > 0.0) {
        const double inter = iw * ih;
        iou_v = inter / ((px2 - px1) * (py2 - py1) + g.area() - inter);
      }
      sl1w += w * sl1;
      iouw += w * (1.0 - iou_v);
    }
  }

  LossReport rep;
  rep.cls_pos = ce_pos / norm;
  rep.cls_neg = ce_neg / norm;
  rep.reg_smooth_l1 = sl1w / norm;
  rep.reg_iou = iouw / norm;
  rep.total = rep.cls_pos + rep.cls_neg + rep.reg_smooth_l1 + rep.reg_iou;
  rep.coefficient_mean = n_pos > 0 ? coef_sum / n_pos : 0.0;
  rep.n_pos = n_pos;
  rep.n_neg = n_neg;

  SavedLossState st{labels, geom, opt, norm};
  const int li = cls_logits.idx, ri = reg_raw.idx;
  ad::Var out = tape.custom(
      Tensor::scalar(rep.total), {cls_logits, reg_raw},
      [st = std::move(st), li, ri](ad::Tape& t, const Tensor& gout) {
        const double gs = gout[0];
        ad::Var lv{&t, li}, rv{&t, ri};
        const Tensor& L = t.value(lv);
        const Tensor& R = t.value(rv);
        const bool need_l = t.requires_grad(lv);
        const bool need_r = t.requires_grad(rv);
        if (!need_l && !need_r) return;
        Tensor* gl = need_l ? &t.grad_buf(lv) : nullptr;
        Tensor* gr = need_r ? &t.grad_buf(rv) : nullptr;
        const LabelAssignment& lab = st.labels;
        const LossOptions& opt = st.opt;
        const double s = opt.stride_scale;
        const double scale = gs / st.norm;
        int pos_ordinal = 0;
        for (int iy = 0; iy < lab.rows; ++iy) {
          for (int ix = 0; ix < lab.cols; ++ix) {
            const PointLabel plab = lab.at(iy, ix);
            if (plab == PointLabel::IGNORE) continue;
            const double l0 = L(0, 0, iy, ix), l1 = L(0, 1, iy, ix);
            const double m = std::max(l0, l1);
            const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
            const double z = e0 + e1;
            const double p0 = e0 / z, p1 = e1 / z;
            if (plab == PointLabel::NEG) {
              if (need_l) {
                (*gl)(0, 0, iy, ix) += scale * (p0 - 1.0);
                (*gl)(0, 1, iy, ix) += scale * p1;
              }
              continue;
            }
            const double ce = ce_from_margin(l0 - l1);
            double w = 1.0;
            if (opt.corrective)
              w = opt.frozen_coefficients ? (*opt.frozen_coefficients)[pos_ordinal]
                                          : 1.0 + std::exp(-ce);
            ++pos_ordinal;

            double d[4], e[4];
            double sl1 = 0.0;
            for (int k = 0; k < 4; ++k) {
              d[k] = s * std::exp(R(0, k, iy, ix));
              e[k] = (d[k] - lab.d_hat(0, k, iy, ix)) / s;
              sl1 += huber(e[k], opt.beta);
            }
            sl1 *= 0.25;

            const double x = st.geom.point_x(ix), y = st.geom.point_y(iy);
            const double px1 = x - d[0], py1 = y - d[1], px2 = x + d[2], py2 = y + d[3];
            const BBox& g = lab.gt;
            const double iw = std::min(px2, g.x2()) - std::max(px1, g.x1());
            const double ih = std::min(py2, g.y2()) - std::max(py1, g.y1());
            const bool overlap = iw > 0.0 && ih > 0.0;
            double iou_v = 0.0, inter = 0.0, uni = 1.0;
            if (overlap) {
              inter = iw * ih;
              uni = (px2 - px1) * (py2 - py1) + g.area() - inter;
              iou_v = inter / uni;
            }

            if (need_l) {
              const double reg_tot = sl1 + (1.0 - iou_v);
              const double cg = (opt.corrective && opt.coefficient_grad &&
                                 !opt.frozen_coefficients)
                                    ? 1.0 - p1 * reg_tot
                                    : 1.0;
              (*gl)(0, 0, iy, ix) += scale * p0 * cg;
              (*gl)(0, 1, iy, ix) += scale * (p1 - 1.0) * cg;
            }
            if (!need_r) continue;

            // d liou / d corner, zero when disjoint
            double dl_c[4] = {0, 0, 0, 0};  // order: x1, y1, x2, y2
            if (overlap) {
              const double hp = py2 - py1, wp = px2 - px1;
              const double di_c[4] = {px1 > g.x1() ? -ih : 0.0, py1 > g.y1() ? -iw : 0.0,
                                      px2 < g.x2() ? ih : 0.0, py2 < g.y2() ? iw : 0.0};
              const double da_c[4] = {-hp, -wp, hp, wp};
              for (int k = 0; k < 4; ++k) {
                const double du = da_c[k] - di_c[k];
                dl_c[k] = -(di_c[k] * uni - inter * du) / (uni * uni);
              }
            }
            // corner derivative w.r.t. each distance: x1 <- -d_l, y1 <- -d_t,
            // x2 <- +d_r, y2 <- +d_b
            const double corner_sign[4] = {-1.0, -1.0, 1.0, 1.0};
            for (int k = 0; k < 4; ++k) {
              const double dsl1 = 0.25 * huber_d(e[k], opt.beta) / s;
              const double diou = dl_c[k] * corner_sign[k];
              (*gr)(0, k, iy, ix) += scale * w * (dsl1 + diou) * d[k];
            }
          }
        }
      });
  return LossResult{out, rep};
}

LossReport merge_reports(const std::vector<LossReport>& parts) {
  LossReport out;
  if (parts.empty()) return out;
  double coef_weighted = 0.0;
  for (const LossReport& r : parts) {
    out.cls_pos += r.cls_pos;
    out.cls_neg += r.cls_neg;
    out.reg_smooth_l1 += r.reg_smooth_l1;
    out.reg_iou += r.reg_iou;
    out.n_pos += r.n_pos;
    out.n_neg += r.n_neg;
    coef_weighted += r.coefficient_mean * r.n_pos;
  }
  const double b = static_cast<double>(parts.size());
  out.cls_pos /= b;
  out.cls_neg /= b;
  out.reg_smooth_l1 /= b;
  out.reg_iou /= b;
  out.total = out.cls_pos + out.cls_neg + out.reg_smooth_l1 + out.reg_iou;
  out.coefficient_mean = out.n_pos > 0 ? coef_weighted / out.n_pos : 0.0;
  return out;
}

}  // namespace thn
