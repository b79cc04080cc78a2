#include "evg/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evg {

GradCheckReport grad_check(const std::function<double()>& loss, std::span<double> params,
                           std::span<const double> analytic, double h, double tol) {
  if (params.size() != analytic.size())
    throw std::invalid_argument("grad_check: gradient length mismatch");
  if (h <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  GradCheckReport report;
  report.tol = tol;
  report.checked = params.size();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss();
    params[i] = saved - h;
    const double down = loss();
    params[i] = saved;

    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
    const double rel = std::fabs(analytic[i] - numeric) / denom;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace evg
