#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "thn/errors.hpp"

namespace thn {

// Shape of a dense 4-D array in (batch, channel, height, width) order.
struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense fp64 tensor, row-major (n, c, h, w). Plain value type: copies are
// deep, no op ever mutates its inputs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0)
      : shape_(s), data_(check_numel(s), fill) {}

  static Tensor zeros(Shape s) { return Tensor(s, 0.0); }
  static Tensor full(Shape s, double v) { return Tensor(s, v); }
  static Tensor scalar(double v) { return Tensor(Shape{1, 1, 1, 1}, v); }
  static Tensor from(Shape s, std::vector<double> values) {
    Tensor t;
    if (static_cast<std::int64_t>(values.size()) != s.numel())
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " does not match shape " + s.str());
    t.shape_ = s;
    t.data_ = std::move(values);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  double operator()(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }
  double& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* plane(int n, int c) { return data_.data() + plane_offset(n, c); }
  const double* plane(int n, int c) const { return data_.data() + plane_offset(n, c); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double item() const {
    if (size() != 1) throw UsageError("item() on non-scalar tensor " + shape_.str());
    return data_[0];
  }

 private:
  static std::size_t check_numel(Shape s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      throw DimensionError("negative dimension in shape " + s.str());
    return static_cast<std::size_t>(s.numel());
  }
  std::size_t index(int n, int c, int y, int x) const {
    return static_cast<std::size_t>(((static_cast<std::int64_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x);
  }
  std::size_t plane_offset(int n, int c) const {
    return static_cast<std::size_t>((static_cast<std::int64_t>(n) * shape_.c + c) * shape_.h * shape_.w);
  }

  Shape shape_{};
  std::vector<double> data_;
};

}  // namespace thn
