#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "thn/errors.hpp"

namespace thn {

// Axis-aligned box in image pixels, center + size representation.
// Corner<->center conversions are exact in floating point (w/2 is a power-of
// -two scaling), so round-trips are bitwise.
struct BBox {
  double cx = 0.0, cy = 0.0;
  double w = 0.0, h = 0.0;

  static BBox from_corner(double x, double y, double w, double h) {
    return BBox{x + w / 2.0, y + h / 2.0, w, h};
  }
  static BBox from_corners(double x1, double y1, double x2, double y2) {
    return from_corner(x1, y1, x2 - x1, y2 - y1);
  }

  double x1() const { return cx - w / 2.0; }
  double y1() const { return cy - h / 2.0; }
  double x2() const { return cx + w / 2.0; }
  double y2() const { return cy + h / 2.0; }
  double area() const { return w * h; }
  bool positive() const { return w > 0.0 && h > 0.0; }

  std::string str() const {
    return "[cx=" + std::to_string(cx) + " cy=" + std::to_string(cy) +
           " w=" + std::to_string(w) + " h=" + std::to_string(h) + "]";
  }
};

// Intersection over union of two boxes, in [0, 1].
inline double iou(const BBox& a, const BBox& b) {
  if (!a.positive() || !b.positive())
    throw DomainError("iou: non-positive box dims " + a.str() + " vs " + b.str());
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

inline double center_distance(const BBox& a, const BBox& b) {
  const double dx = a.cx - b.cx, dy = a.cy - b.cy;
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace thn
