#pragma once

// Vectorized elementwise kernels shared by the autodiff ops and the fused
// recurrent cell.

#include <Eigen/Core>
#include <cstddef>

namespace sivcast::kernels {

using ArrayMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;

inline void sigmoid(const double* in, double* out, std::size_t n) {
  ConstArrayMap x(in, static_cast<Eigen::Index>(n));
  ArrayMap y(out, static_cast<Eigen::Index>(n));
  y = 1.0 / (1.0 + (-x).exp());
}

// 1 - 2/(exp(2x)+1); saturates cleanly at both ends.
inline void tanh(const double* in, double* out, std::size_t n) {
  ConstArrayMap x(in, static_cast<Eigen::Index>(n));
  ArrayMap y(out, static_cast<Eigen::Index>(n));
  y = 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
}

}  // namespace sivcast::kernels
