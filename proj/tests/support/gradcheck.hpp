#pragma once

// Central finite-difference oracle used by the gradient tests. Independent of
// the analytic backward code: it only ever calls the loss function.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace enlg::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor), maximized over coordinates.
/// The numeric derivative uses the fourth-order central stencil, which allows a
/// step large enough to keep roundoff well below the tolerance.
inline GradCheckResult compare_to_finite_differences(std::vector<double>& params,
                                                     const std::vector<double>& analytic,
                                                     const std::function<double()>& loss,
                                                     double h = 1e-4, double floor = 1e-6) {
  GradCheckResult r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    auto at = [&](double delta) {
      params[i] = saved + delta;
      return loss();
    };
    const double numeric = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
    params[i] = saved;
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = i;
    }
    ++r.checked;
  }
  return r;
}

}  // namespace enlg::testing
