#pragma once

// Forecast error metrics, bootstrap intervals, the Clarke error grid and the
// correlation/paired tests used in reports.

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace sivcast::metrics {

struct PointErrors {
  double rmse = 0.0;
  double mae = 0.0;
};

/// Errors at the last horizon step of N×h row-major predictions and labels.
/// Throws DataError when N is zero or the sizes disagree.
PointErrors final_point_errors(std::span<const double> preds, std::span<const double> labels,
                               std::size_t horizon);

/// pred - label at the last horizon step, one per window.
std::vector<double> final_point_residuals(std::span<const double> preds,
                                          std::span<const double> labels, std::size_t horizon);

enum class Metric { kRmse, kMae };

double metric_from_residuals(std::span<const double> residuals, Metric metric);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile interval of `metric` over `samples` resamplings of the windows,
/// with linear interpolation between order statistics. Requires samples >= 100
/// and a nonempty residual set.
Interval bootstrap_ci(std::span<const double> residuals, Metric metric, std::size_t samples,
                      double level, std::mt19937_64& rng);

/// Elementwise mean of per-individual bounds.
Interval average_intervals(std::span<const Interval> intervals);

enum class ClarkeZone { kA = 0, kB, kC, kD, kE };

char zone_letter(ClarkeZone z);

/// Standard Clarke EGA zone for one (reference, prediction) pair in mg/dL.
/// Throws DataError on nonpositive values.
ClarkeZone clarke_zone(double reference, double prediction);

using ClarkeProportions = std::array<double, 5>;

ClarkeProportions clarke_grid(std::span<const double> predictions,
                              std::span<const double> references);

struct Correlation {
  double r = 0.0;
  double p = 0.0;  // two-sided; NaN when n = 2
  std::size_t n = 0;
};

/// Sample Pearson correlation with a t-distribution p-value on n-2 degrees of
/// freedom. Needs n >= 2 and nonzero variance in both samples (NumericalError
/// otherwise).
Correlation pearson(std::span<const double> xs, std::span<const double> ys);

struct PairedTest {
  double mean_difference = 0.0;  // mean(xs - ys)
  double t = 0.0;
  double p = 0.0;
  std::size_t n = 0;
};

/// Two-sided paired t-test on xs - ys. Needs n >= 2.
PairedTest paired_t_test(std::span<const double> xs, std::span<const double> ys);

}  // namespace sivcast::metrics
