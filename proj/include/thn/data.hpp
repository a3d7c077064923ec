#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "thn/bbox.hpp"
#include "thn/image.hpp"
#include "thn/labels.hpp"
#include "thn/rng.hpp"

namespace thn {

// ---------------------------------------------------------------------------
// dataset model

struct SequenceAnnotation {
  std::string name;
  std::vector<std::string> frame_paths;  // 1-indexed on disk, ordered here
  std::vector<BBox> gt;                  // one per frame
  std::vector<bool> out_of_view;         // box outside frame bounds
  std::set<std::string> attributes;
  bool truncated = false;  // synthetic sequence cut short mid-generation

  size_t frames() const { return frame_paths.size(); }
};

// One sequence directory in OTB layout: img/%04d.ppm + groundtruth_rect.txt
// with comma- or tab-separated "x,y,w,h" lines.
SequenceAnnotation load_otb(const std::string& dir);

// A dataset directory: manifest.txt lines "name<TAB>attr1,attr2" when
// present, otherwise every subdirectory holding a groundtruth_rect.txt.
std::vector<SequenceAnnotation> load_dataset(const std::string& dir);

// ---------------------------------------------------------------------------
// synthetic sequences

struct SynthSpec {
  int frames = 40;
  int width = 144, height = 144;
  double size_min = 18.0, size_max = 32.0;
  double speed_max = 3.0;
  int max_distractors = 2;
  double p_distractor = 0.5;
  double p_occlusion = 0.4;
  double p_scale_drift = 0.4;
  double scale_drift = 0.01;  // per-frame growth factor when drifting
  double noise = 0.02;        // background noise amplitude, fraction of 255
};

struct SynthSequence {
  SequenceAnnotation ann;  // frame_paths empty until written to disk
  std::vector<Image> frames;
};

// Deterministic in `rng`: the same seed reproduces frames bit for bit.
SynthSequence gen_sequence(const SynthSpec& spec, const std::string& name, Rng rng);

// Writes sequences in OTB layout plus a manifest; returns the manifest path.
std::string write_dataset(const std::string& out_dir, std::vector<SynthSequence>& seqs);

// ---------------------------------------------------------------------------
// crop pipeline

struct CropConfig {
  int template_size = 127;
  int search_size_train = 511;
  int search_size_infer = 255;
  double aug_shift = 32.0;  // max |shift| of the training search crop, crop px
  double aug_scale = 0.05;  // max relative size jitter of the training crop
};

enum class CropMode { TRAIN, INFERENCE };

struct CropJitter {
  double dx = 0.0, dy = 0.0;  // crop pixels
  double scale = 1.0;
};

struct CropPair {
  Tensor template_img;  // (1,3,T,T)
  Tensor search_img;    // (1,3,S,S)
  CropGeometry template_geom;
  CropGeometry search_geom;
  BBox gt_in_search;  // search-crop coordinates
  bool has_gt = true;
};

// Context-padded square crops: p = (w+h)/2, template side sqrt((w+p)(h+p))
// scaled to the template size, search side proportionally larger.
double context_side(const BBox& box);

CropPair crop_pair(const Image& frame_t, const BBox& gt_t, const Image& frame_s,
                   const BBox& gt_s, CropMode mode, const CropConfig& cfg,
                   const CropJitter& jitter = {});

// ---------------------------------------------------------------------------
// label assignment

struct AssignConfig {
  double pos_axis_div = 4.0;  // POS inside ellipse with semi-axes (w,h)/div
  double neg_axis_div = 2.0;  // NEG outside ellipse with semi-axes (w,h)/div
};

LabelAssignment assign_labels(const BBox& gt_in_search, const MapGeometry& geom,
                              const AssignConfig& cfg = {});

// All-negative assignment for pairs whose search crop holds no target.
LabelAssignment negative_labels(const MapGeometry& geom);

// Caps positives/negatives by flipping the excess to IGNORE; selection is
// a deterministic function of `rng`.
LabelAssignment subsample_labels(const LabelAssignment& in, int max_pos, int max_neg, Rng& rng);

}  // namespace thn
