#pragma once

#include <functional>
#include <string>
#include <vector>

namespace thn {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;   // worst |analytic - fd| / max(|analytic|, |fd|)
  double max_abs_err = 0.0;
  int n_checked = 0;
  bool pass = false;
};

struct GradCheckOptions {
  double eps = 1e-5;        // central-difference step
  double rel_tol = 1e-4;
  double abs_floor = 1e-7;  // |a - fd| below this always passes
};

// Compares an analytic gradient against central finite differences of `f`
// at `x0`. `f` must be a pure function of its argument vector.
GradCheckResult check_gradient(const std::string& name,
                               const std::function<double(const std::vector<double>&)>& f,
                               const std::vector<double>& analytic_grad,
                               const std::vector<double>& x0,
                               GradCheckOptions opt = {});

// Full per-op verification suite over seeded random fixtures. Covers every
// differentiable operation in the model and the loss stack.
std::vector<GradCheckResult> gradcheck_suite(std::uint64_t seed);

}  // namespace thn
