#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace evg {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double tol = 0.0;
  bool pass = false;
};

/// Central-difference check of an analytic gradient. `loss` evaluates the
/// scalar objective at the current parameter values; `params` is perturbed
/// in place and restored. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const std::function<double()>& loss, std::span<double> params,
                           std::span<const double> analytic, double h, double tol);

}  // namespace evg
