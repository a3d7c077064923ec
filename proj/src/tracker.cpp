#include "thn/tracker.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace thn {

SiamTracker::SiamTracker(const Model& model, PenaltyConfig pen, CropConfig crop)
    : model_(model), pen_(pen), crop_(crop) {
  const int r = model_.response_size(crop_.search_size_infer);
  geom_ = MapGeometry::centered(crop_.search_size_infer, r, r,
                                model_.config().backbone.total_stride);
  window_ = make_hann_window(r, r);
}

void SiamTracker::init(const Image& frame, const BBox& box) {
  if (!box.positive()) throw DomainError("tracker: init box must have positive size");
  Crop tpl = crop_square(frame, box.cx, box.cy, context_side(box), crop_.template_size);
  tpl_feats_ = model_.template_features(tpl.tensor);
  state_ = box;
  ready_ = true;
}

SiamTracker::Update SiamTracker::update(const Image& frame) {
  if (!ready_) throw UsageError("tracker: update before init");
  const int S = crop_.search_size_infer;
  const double side = context_side(state_) * static_cast<double>(S) / crop_.template_size;
  Crop srch = crop_square(frame, state_.cx, state_.cy, side, S);

  Model::SearchOut out = model_.forward_search(tpl_feats_, srch.tensor);
  last_fused_ = out.fused;

  ScoreMap scores;
  scores.probs = std::move(out.probs);
  RegressionMap regs;
  regs.offsets = std::move(out.offsets);
  DecodeResult dec = decode(scores, regs, state_, srch.geom, geom_, pen_, window_);

  BBox next = dec.box;
  next.cx = std::clamp(next.cx, 0.0, static_cast<double>(frame.w));
  next.cy = std::clamp(next.cy, 0.0, static_cast<double>(frame.h));
  next.w = std::clamp(next.w, 2.0, static_cast<double>(frame.w));
  next.h = std::clamp(next.h, 2.0, static_cast<double>(frame.h));
  state_ = next;
  return Update{state_, dec.confidence};
}

std::vector<TrackedFrame> track_sequence(const Model& model, const PenaltyConfig& pen,
                                         const CropConfig& crop, const SequenceAnnotation& ann) {
  if (ann.frames() == 0) throw EvalError("track: sequence " + ann.name + " has no frames");
  std::vector<TrackedFrame> out;
  out.reserve(ann.frames());
  SiamTracker tracker(model, pen, crop);
  const Image first = read_ppm(ann.frame_paths[0]);
  tracker.init(first, ann.gt[0]);
  out.push_back(TrackedFrame{ann.gt[0], 1.0});
  for (size_t f = 1; f < ann.frames(); ++f) {
    const Image frame = read_ppm(ann.frame_paths[f]);
    const SiamTracker::Update u = tracker.update(frame);
    out.push_back(TrackedFrame{u.box, u.confidence});
  }
  return out;
}

void write_result_csv(const std::string& path, const std::vector<TrackedFrame>& frames) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("results: cannot open for write: " + path);
  os << "frame_index,x,y,w,h,confidence\n";
  char buf[256];
  for (size_t i = 0; i < frames.size(); ++i) {
    const BBox& b = frames[i].box;
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", i + 1, b.x1(),
                  b.y1(), b.w, b.h, frames[i].confidence);
    os << buf;
  }
  if (!os) throw IoError("results: write failed: " + path);
}

std::vector<TrackedFrame> read_result_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("results: cannot open: " + path);
  std::vector<TrackedFrame> out;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    double vals[6] = {0, 0, 0, 0, 0, 0};
    int field = 0;
    std::string token;
    for (char ch : line) {
      if (ch == ',') {
        if (field < 6) vals[field++] = std::stod(token);
        token.clear();
      } else {
        token += ch;
      }
    }
    if (!token.empty() && field < 6) vals[field++] = std::stod(token);
    if (field != 6) throw IoError("results: malformed row in " + path + ": '" + line + "'");
    out.push_back(TrackedFrame{BBox::from_corner(vals[1], vals[2], vals[3], vals[4]), vals[5]});
  }
  return out;
}

}  // namespace thn
