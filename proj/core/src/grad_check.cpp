#include "sivcast/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sivcast/error.hpp"

namespace sivcast::ad {

namespace {

double evaluate(const LossBuilder& loss, std::size_t param) {
  Tape tape(false);
  const double v = loss(tape).item();
  if (!std::isfinite(v)) {
    throw NumericalError("grad_check: non-finite loss while perturbing parameter " +
                         std::to_string(param));
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss, std::span<DArray> params, double eps,
                           double tol) {
  if (!(eps >= 1e-6 && eps <= 1e-4)) {
    throw ContractError("grad_check: eps must lie in [1e-6, 1e-4], got " +
                        std::to_string(eps));
  }

  for (auto& p : params) {
    if (!p.requires_grad()) {
      throw ContractError("grad_check: parameter arrays must require gradients");
    }
    p.zero_grad();
  }
  {
    Tape tape;
    DArray value = loss(tape);
    if (!std::isfinite(value.item())) {
      throw NumericalError("grad_check: non-finite loss at the unperturbed point");
    }
    tape.backward(value);
  }

  GradCheckReport report;
  report.tolerance = tol;
  report.max_rel_error_per_param.assign(params.size(), 0.0);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(analytic[i])) {
        throw NumericalError("grad_check: non-finite analytic gradient in parameter " +
                             std::to_string(pi));
      }
      const double original = values[i];
      values[i] = original + eps;
      const double up = evaluate(loss, pi);
      values[i] = original - eps;
      const double down = evaluate(loss, pi);
      values[i] = original;
      const double fd = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-8});
      const double rel = std::abs(analytic[i] - fd) / denom;
      if (rel > report.max_rel_error_per_param[pi]) report.max_rel_error_per_param[pi] = rel;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = pi;
        report.worst_index = i;
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace sivcast::ad
