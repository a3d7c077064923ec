#pragma once

#include "thn/rng.hpp"
#include "thn/tensor.hpp"

namespace fixtures {

inline thn::Tensor random_tensor(thn::Shape s, thn::Rng& rng, double scale = 1.0) {
  thn::Tensor t(s);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.gaussian() * scale;
  return t;
}

inline double max_abs_diff(const thn::Tensor& a, const thn::Tensor& b) {
  if (!(a.shape() == b.shape())) return 1e300;
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace fixtures
