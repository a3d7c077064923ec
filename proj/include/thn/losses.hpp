#pragma once

#include <optional>
#include <span>
#include <vector>

#include "thn/bbox.hpp"
#include "thn/labels.hpp"
#include "thn/tape.hpp"

namespace thn {

// iou lives in bbox.hpp; the loss forms here follow it.

inline double iou_loss(const BBox& pred, const BBox& gt) { return 1.0 - iou(pred, gt); }

// Mean over components of the Huber-style piecewise penalty.
double smooth_l1(std::span<const double> d, std::span<const double> d_hat, double beta);

// Smooth L1 on the offsets plus the IoU term on the decoded boxes.
double reg_loss(std::span<const double> d, std::span<const double> d_hat, double beta,
                const BBox& pred, const BBox& gt);

// Positive-sample objective: CE + (1 + e^{-CE}) * reg, with CE = -ln p.
// The coefficient equals 1 + p and acts as a pure sample weight.
double pos_loss(double p, double reg);
double corrective_coefficient(double p);

enum class LossNormalizer { N_PLUS_M, N };

struct LossOptions {
  bool corrective = true;
  bool coefficient_grad = false;  // let gradient flow through the coefficient
  LossNormalizer normalizer = LossNormalizer::N_PLUS_M;
  double beta = 1.0;
  double stride_scale = 8.0;  // offsets are exp-scaled by this; also the
                              // smooth-L1 normalization unit
  // Test hook: freeze per-positive coefficients at given values so finite
  // differences can probe the detached-coefficient semantics.
  std::optional<std::vector<double>> frozen_coefficients;
};

// Per-step scalar summary. total always reproduces as
// cls_pos + cls_neg + reg_smooth_l1 + reg_iou; the regression parts carry
// the corrective coefficient inside them.
struct LossReport {
  double total = 0.0;
  double cls_pos = 0.0;
  double cls_neg = 0.0;
  double reg_smooth_l1 = 0.0;
  double reg_iou = 0.0;
  double coefficient_mean = 0.0;  // 0 when the step had no positive samples
  int n_pos = 0;
  int n_neg = 0;
};

struct LossResult {
  ad::Var loss;  // scalar
  LossReport report;
};

// Fused training objective over one sample. `cls_logits` is (1,2,H,W) raw
// head output, `reg_raw` is (1,4,H,W) pre-exponential offsets. Softmax, CE,
// the exp offset transform, Smooth L1 and the IoU term are differentiated
// inside the op; the corrective coefficient is treated as a constant unless
// opt.coefficient_grad is set.
LossResult total_loss(ad::Tape& tape, ad::Var cls_logits, ad::Var reg_raw,
                      const LabelAssignment& labels, const MapGeometry& geom,
                      const LossOptions& opt);

// Aggregates per-sample reports into the per-step row that the trainer logs.
LossReport merge_reports(const std::vector<LossReport>& parts);

}  // namespace thn
