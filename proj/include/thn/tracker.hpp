#pragma once

#include <vector>

#include "thn/data.hpp"
#include "thn/head.hpp"
#include "thn/model.hpp"

namespace thn {

// Single-sequence inference state machine. Template features are computed
// once at init and correlated against every subsequent frame's search crop.
// One instance per sequence; instances are independent.
class SiamTracker {
 public:
  SiamTracker(const Model& model, PenaltyConfig pen, CropConfig crop);

  void init(const Image& frame, const BBox& box);

  struct Update {
    BBox box;
    double confidence = 0.0;
  };
  Update update(const Image& frame);

  const BBox& state() const { return state_; }
  // Matcher output of the last update; feeds response-focus diagnostics.
  const Tensor& last_fused() const { return last_fused_; }
  const MapGeometry& map_geometry() const { return geom_; }

 private:
  const Model& model_;
  PenaltyConfig pen_;
  CropConfig crop_;
  std::array<Tensor, 3> tpl_feats_;
  Tensor window_;
  MapGeometry geom_;
  BBox state_;
  bool ready_ = false;
  Tensor last_fused_;
};

struct TrackedFrame {
  BBox box;
  double confidence = 0.0;
};

// Runs a tracker over a whole sequence, frame 1 echoing the init box.
std::vector<TrackedFrame> track_sequence(const Model& model, const PenaltyConfig& pen,
                                         const CropConfig& crop, const SequenceAnnotation& ann);

// Result CSV: one "frame_index,x,y,w,h,confidence" row per frame, corner
// convention, frame indices starting at 1.
void write_result_csv(const std::string& path, const std::vector<TrackedFrame>& frames);
std::vector<TrackedFrame> read_result_csv(const std::string& path);

}  // namespace thn
