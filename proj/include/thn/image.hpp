#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "thn/geometry.hpp"
#include "thn/tensor.hpp"

namespace thn {

// 8-bit interleaved RGB raster. Frames live on disk as binary PPM (P6).
struct Image {
  int w = 0, h = 0;
  std::vector<std::uint8_t> rgb;  // 3 * w * h

  std::uint8_t at(int x, int y, int c) const {
    return rgb[static_cast<size_t>((y * w + x) * 3 + c)];
  }
  void set(int x, int y, int c, std::uint8_t v) {
    rgb[static_cast<size_t>((y * w + x) * 3 + c)] = v;
  }
  static Image filled(int w, int h, std::array<std::uint8_t, 3> color) {
    Image img;
    img.w = w;
    img.h = h;
    img.rgb.resize(static_cast<size_t>(3) * w * h);
    for (size_t i = 0; i < img.rgb.size(); i += 3)
      for (int c = 0; c < 3; ++c) img.rgb[i + static_cast<size_t>(c)] = color[static_cast<size_t>(c)];
    return img;
  }
  std::array<double, 3> channel_mean() const;
};

void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// Square context crop: the window of side `side` (frame pixels) centered at
// (cx, cy), resampled bilinearly to out_size x out_size. Out-of-frame area
// reads as the frame's per-channel mean color. Output values are v/255 - 0.5.
// The returned geometry maps crop coordinates back to frame coordinates.
struct Crop {
  Tensor tensor;  // (1,3,out,out)
  CropGeometry geom;
};
Crop crop_square(const Image& frame, double cx, double cy, double side, int out_size);

}  // namespace thn
