#pragma once

#include "thn/bbox.hpp"
#include "thn/errors.hpp"

namespace thn {

// Affine map between crop pixel coordinates and source-frame coordinates:
// frame = origin + crop / scale. Pure scaling + translation, so box
// round-trips are exact up to fp rounding.
struct CropGeometry {
  double origin_x = 0.0, origin_y = 0.0;
  double scale = 1.0;  // crop pixels per frame pixel

  double to_frame_x(double x) const { return origin_x + x / scale; }
  double to_frame_y(double y) const { return origin_y + y / scale; }
  double to_crop_x(double x) const { return (x - origin_x) * scale; }
  double to_crop_y(double y) const { return (y - origin_y) * scale; }

  BBox to_frame(const BBox& b) const {
    return BBox{to_frame_x(b.cx), to_frame_y(b.cy), b.w / scale, b.h / scale};
  }
  BBox to_crop(const BBox& b) const {
    return BBox{to_crop_x(b.cx), to_crop_y(b.cy), b.w * scale, b.h * scale};
  }
};

// Mapping from response-map cell indices to search-crop pixel coordinates.
// Cells form a centered grid with the backbone's total stride as pitch.
struct MapGeometry {
  int rows = 0, cols = 0;
  int stride = 0;
  double x0 = 0.0, y0 = 0.0;

  static MapGeometry centered(int search_size, int rows, int cols, int stride) {
    MapGeometry g;
    g.rows = rows;
    g.cols = cols;
    g.stride = stride;
    g.x0 = (search_size - 1 - (cols - 1) * stride) / 2.0;
    g.y0 = (search_size - 1 - (rows - 1) * stride) / 2.0;
    return g;
  }

  double point_x(int ix) const {
    if (ix < 0 || ix >= cols) throw UsageError("map point column out of range");
    return x0 + static_cast<double>(ix) * stride;
  }
  double point_y(int iy) const {
    if (iy < 0 || iy >= rows) throw UsageError("map point row out of range");
    return y0 + static_cast<double>(iy) * stride;
  }
};

}  // namespace thn
