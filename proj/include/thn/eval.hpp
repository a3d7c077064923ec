#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "thn/bbox.hpp"
#include "thn/data.hpp"

namespace thn {

// ---------------------------------------------------------------------------
// curves

struct EvalCurves {
  std::vector<double> precision_thresholds;  // 0..50 px, step 1
  std::vector<double> precision_values;
  std::vector<double> success_thresholds;  // 0..1, step 0.05
  std::vector<double> success_values;
  double auc = 0.0;             // mean of the sampled success values
  double precision_at_20 = 0.0;
};

double center_error(const BBox& pred, const BBox& gt);

// Success value at threshold t counts frames with overlap strictly above t.
EvalCurves success_curve(const std::vector<double>& overlaps);
// Precision value at threshold t counts frames with center error <= t.
EvalCurves precision_curve(const std::vector<double>& errors);
EvalCurves make_curves(const std::vector<double>& overlaps, const std::vector<double>& errors);

// ---------------------------------------------------------------------------
// VOT-style reset protocol

struct VotOptions {
  int reinit_gap = 5;  // frames skipped after a failure before re-init
  int burn_in = 10;    // frames after each re-init excluded from accuracy
  int eao_k = 100;     // horizon of the simplified expected-average-overlap
};

struct VotReport {
  double accuracy = 0.0;  // mean overlap while successfully tracking
  int robustness = 0;     // failure count == resets.size()
  double eao_simple = 0.0;
  std::vector<int> resets;     // frame indices of failures (1-based frame 0 = init)
  std::vector<double> series;  // per-frame overlap, frames 1..n-1, 0 when not tracked
};

// The reset protocol over pluggable init/update callbacks: do_init(f)
// reinitializes from ground truth at frame f, do_update(f) returns the
// prediction for frame f. Failure is overlap == 0; re-initialization happens
// reinit_gap frames later.
VotReport vot_protocol(const std::vector<BBox>& gt, const std::function<void(int)>& do_init,
                       const std::function<BBox(int)>& do_update, const VotOptions& opt);

// Mean over sequences of the mean overlap on each run's first
// min(frames, eao_k) evaluated frames.
double eao_simple(const std::vector<std::vector<double>>& per_sequence_series, int eao_k);

// Degenerate no-reset reading of a fixed trajectory: accuracy and failure
// count straight off the per-frame overlaps.
VotReport vot_from_series(const std::vector<double>& series, const VotOptions& opt);

// ---------------------------------------------------------------------------
// per-attribute breakdown and report files

struct SequenceResult {
  std::string name;
  std::vector<double> overlaps;
  std::vector<double> errors;
};

// Curves over the union of frames of sequences bearing each attribute tag.
std::map<std::string, EvalCurves> attribute_breakdown(
    const std::vector<SequenceResult>& results,
    const std::vector<SequenceAnnotation>& annotations);

void write_curves_csv(const std::string& path, const std::vector<double>& thresholds,
                      const std::vector<double>& values);
void write_summary(const std::string& path, const std::map<std::string, double>& keys);

}  // namespace thn
