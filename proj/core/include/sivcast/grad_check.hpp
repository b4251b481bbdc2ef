#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "sivcast/autodiff.hpp"

namespace sivcast::ad {

struct GradCheckReport {
  /// Largest relative error seen for each parameter array.
  std::vector<double> max_rel_error_per_param;
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Builds a scalar loss on the supplied tape from the current parameter values.
using LossBuilder = std::function<DArray(Tape&)>;

/// Compares reverse-mode gradients against central finite differences.
///
/// Relative error per entry is |g_analytic - g_fd| / max(|g_analytic|, |g_fd|, 1e-8).
/// Parameter values are perturbed in place and restored before returning.
/// Throws ContractError if eps is outside [1e-6, 1e-4] and NumericalError
/// (naming the parameter index) if the loss or a gradient is not finite.
GradCheckReport grad_check(const LossBuilder& loss, std::span<DArray> params,
                           double eps = 1e-5, double tol = 1e-4);

}  // namespace sivcast::ad
