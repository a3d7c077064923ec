#pragma once

#include <cstdint>
#include <vector>

#include "thn/bbox.hpp"
#include "thn/geometry.hpp"
#include "thn/tensor.hpp"

namespace thn {

enum class PointLabel : std::int8_t { NEG = -1, IGNORE = 0, POS = 1 };

// Per-response-cell training targets: a class label for every cell and, at
// positive cells, the (left, top, right, bottom) distances to the ground
// truth edges in search-crop pixels.
struct LabelAssignment {
  int rows = 0, cols = 0;
  std::vector<PointLabel> cls;  // row-major, rows*cols
  Tensor d_hat;                 // (1,4,rows,cols), meaningful at POS cells
  bool has_gt = false;          // false for negative pairs (target absent)
  BBox gt;                      // in search-crop coordinates, when has_gt

  PointLabel at(int iy, int ix) const { return cls[static_cast<size_t>(iy) * cols + ix]; }
  int count(PointLabel l) const {
    int n = 0;
    for (PointLabel v : cls) n += (v == l) ? 1 : 0;
    return n;
  }
};

}  // namespace thn
