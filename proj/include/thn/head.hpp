#pragma once

#include <string>

#include "thn/bbox.hpp"
#include "thn/geometry.hpp"
#include "thn/params.hpp"
#include "thn/rng.hpp"
#include "thn/tape.hpp"

namespace thn {

// Anchor-free head: two convs per branch over the fused response map.
// Classification emits 2-channel logits; regression emits 4 raw channels
// turned into strictly positive (left, top, right, bottom) edge distances by
// stride_scale * exp(raw).
struct HeadConfig {
  int in_channels = 64;
  int mid_channels = 64;
  double stride_scale = 8.0;
  // Context crops normalize the target to about half the template window, so
  // offsets of ~4 stride units per side are the natural operating point.
  double reg_bias_init = 1.3862943611198906;  // ln 4
};

struct PenaltyConfig {
  double window_influence = 0.40;  // lambda blending the cosine window
  double penalty_k = 0.05;         // scale/ratio change penalty strength
  double size_lr = 0.30;           // smoothing toward the predicted size
};

// Inference-side value types.
struct ScoreMap {
  Tensor logits;  // (n,2,h,w)
  Tensor probs;   // channelwise softmax of logits
};

struct RegressionMap {
  Tensor offsets;  // (n,4,h,w), pixels, strictly positive
};

class Head {
 public:
  explicit Head(HeadConfig cfg);

  const HeadConfig& config() const { return cfg_; }

  void init_params(ParamStore& store, const Rng& rng) const;

  struct ClsOut {
    ad::Var logits;
    ad::Var probs;
  };
  ClsOut classify(ad::Tape& t, ad::Var fused, const ParamBinding& p) const;

  ad::Var regress_raw(ad::Tape& t, ad::Var fused, const ParamBinding& p) const;
  // stride_scale * exp(raw)
  ad::Var regress(ad::Tape& t, ad::Var fused, const ParamBinding& p) const;

 private:
  HeadConfig cfg_;
};

// Cosine (Hann) window with peak 1 at the map center, as a (1,1,rows,cols)
// tensor.
Tensor make_hann_window(int rows, int cols);

struct DecodeResult {
  BBox box;           // frame coordinates
  double confidence;  // foreground probability at the chosen cell
  int best_iy = 0, best_ix = 0;
  bool size_clamped = false;
};

// Picks the best candidate under the scale/ratio-change penalty and cosine
// window, maps it back to frame coordinates and smooths the size against the
// previous state. `prev` is the previous tracker box in frame coordinates.
DecodeResult decode(const ScoreMap& scores, const RegressionMap& regs, const BBox& prev,
                    const CropGeometry& crop_geom, const MapGeometry& map_geom,
                    const PenaltyConfig& pen, const Tensor& window);

}  // namespace thn
