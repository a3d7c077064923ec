#include "thn/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace thn {

std::array<double, 3> Image::channel_mean() const {
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  const size_t n = static_cast<size_t>(w) * h;
  if (n == 0) return acc;
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) acc[static_cast<size_t>(c)] += rgb[i * 3 + static_cast<size_t>(c)];
  for (double& v : acc) v /= static_cast<double>(n);
  return acc;
}

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("ppm: cannot open for write: " + path);
  os << "P6\n" << img.w << " " << img.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()),
           static_cast<std::streamsize>(img.rgb.size()));
  if (!os) throw IoError("ppm: write failed: " + path);
}

namespace {

int read_ppm_int(std::istream& is) {
  // skips whitespace and '#' comments per the PPM grammar
  int c = is.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#')
      while (c != '\n' && c != EOF) c = is.get();
    c = is.get();
  }
  int v = 0;
  bool any = false;
  while (std::isdigit(c)) {
    v = v * 10 + (c - '0');
    any = true;
    c = is.get();
  }
  if (!any) throw IoError("ppm: malformed header");
  return v;
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("ppm: cannot open: " + path);
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  if (m0 != 'P' || m1 != '6') throw IoError("ppm: not a binary P6 file: " + path);
  Image img;
  img.w = read_ppm_int(is);
  img.h = read_ppm_int(is);
  const int maxval = read_ppm_int(is);
  if (maxval != 255) throw IoError("ppm: only 8-bit images supported: " + path);
  img.rgb.resize(static_cast<size_t>(3) * img.w * img.h);
  is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!is) throw IoError("ppm: truncated pixel data: " + path);
  return img;
}

Crop crop_square(const Image& frame, double cx, double cy, double side, int out_size) {
  if (side <= 0.0 || out_size < 1) throw DomainError("crop: non-positive crop window");
  const std::array<double, 3> mean = frame.channel_mean();
  Crop out;
  out.geom.scale = static_cast<double>(out_size) / side;
  out.geom.origin_x = cx - side / 2.0;
  out.geom.origin_y = cy - side / 2.0;
  out.tensor = Tensor(Shape{1, 3, out_size, out_size});

  for (int v = 0; v < out_size; ++v) {
    for (int u = 0; u < out_size; ++u) {
      // sample at the crop pixel's center, expressed in frame index space
      const double fx = out.geom.to_frame_x(u + 0.5) - 0.5;
      const double fy = out.geom.to_frame_y(v + 0.5) - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const int y0 = static_cast<int>(std::floor(fy));
      const double ax = fx - x0, ay = fy - y0;
      for (int c = 0; c < 3; ++c) {
        auto tap = [&](int x, int y) -> double {
          if (x < 0 || x >= frame.w || y < 0 || y >= frame.h) return mean[static_cast<size_t>(c)];
          return static_cast<double>(frame.at(x, y, c));
        };
        const double val = (1 - ax) * (1 - ay) * tap(x0, y0) + ax * (1 - ay) * tap(x0 + 1, y0) +
                           (1 - ax) * ay * tap(x0, y0 + 1) + ax * ay * tap(x0 + 1, y0 + 1);
        out.tensor(0, c, v, u) = val / 255.0 - 0.5;
      }
    }
  }
  return out;
}

}  // namespace thn
