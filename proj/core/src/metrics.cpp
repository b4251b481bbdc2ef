#include "sivcast/metrics.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>

#include "sivcast/error.hpp"

namespace sivcast::metrics {

namespace {

void check_pairs(std::size_t preds, std::size_t labels, std::size_t horizon, const char* op) {
  if (horizon == 0) throw ContractError(std::string(op) + ": horizon must be positive");
  if (preds != labels) {
    throw DimensionError(std::string(op) + ": " + std::to_string(preds) + " predictions vs " +
                         std::to_string(labels) + " labels");
  }
  if (preds == 0) throw DataError(std::string(op) + ": no windows");
  if (preds % horizon != 0) {
    throw DimensionError(std::string(op) + ": " + std::to_string(preds) +
                         " values is not a multiple of horizon " + std::to_string(horizon));
  }
}

double student_two_sided(double t, double dof) {
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace

std::vector<double> final_point_residuals(std::span<const double> preds,
                                          std::span<const double> labels, std::size_t horizon) {
  check_pairs(preds.size(), labels.size(), horizon, "final_point_residuals");
  const std::size_t n = preds.size() / horizon;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i * horizon + horizon - 1;
    out[i] = preds[k] - labels[k];
  }
  return out;
}

double metric_from_residuals(std::span<const double> r, Metric metric) {
  if (r.empty()) throw DataError("metric: no residuals");
  double acc = 0.0;
  if (metric == Metric::kRmse) {
    for (double e : r) acc += e * e;
    return std::sqrt(acc / static_cast<double>(r.size()));
  }
  for (double e : r) acc += std::abs(e);
  return acc / static_cast<double>(r.size());
}

PointErrors final_point_errors(std::span<const double> preds, std::span<const double> labels,
                               std::size_t horizon) {
  auto r = final_point_residuals(preds, labels, horizon);
  return {metric_from_residuals(r, Metric::kRmse), metric_from_residuals(r, Metric::kMae)};
}

Interval bootstrap_ci(std::span<const double> residuals, Metric metric, std::size_t samples,
                      double level, std::mt19937_64& rng) {
  if (residuals.empty()) throw DataError("bootstrap_ci: no residuals");
  if (samples < 100) throw ContractError("bootstrap_ci: at least 100 resamples are required");
  if (!(level > 0.0 && level < 1.0)) throw ContractError("bootstrap_ci: level must lie in (0, 1)");
  const std::size_t n = residuals.size();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> draw(n), stats(samples);
  for (auto& s : stats) {
    for (auto& d : draw) d = residuals[pick(rng)];
    s = metric_from_residuals(draw, metric);
  }
  std::sort(stats.begin(), stats.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(samples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, samples - 1);
    const double frac = pos - static_cast<double>(lo);
    return stats[lo] + frac * (stats[hi] - stats[lo]);
  };
  const double tail = (1.0 - level) / 2.0;
  return {quantile(tail), quantile(1.0 - tail)};
}

Interval average_intervals(std::span<const Interval> intervals) {
  if (intervals.empty()) throw DataError("average_intervals: no intervals");
  Interval out{0.0, 0.0};
  for (const auto& i : intervals) {
    out.lo += i.lo;
    out.hi += i.hi;
  }
  out.lo /= static_cast<double>(intervals.size());
  out.hi /= static_cast<double>(intervals.size());
  return out;
}

char zone_letter(ClarkeZone z) { return static_cast<char>('A' + static_cast<int>(z)); }

ClarkeZone clarke_zone(double ref, double pred) {
  if (!(ref > 0.0) || !(pred > 0.0)) {
    throw DataError("clarke_zone: values must be positive mg/dL, got reference " +
                    std::to_string(ref) + " and prediction " + std::to_string(pred));
  }
  if ((ref <= 70 && pred <= 70) || (pred <= 1.2 * ref && pred >= 0.8 * ref)) return ClarkeZone::kA;
  if ((ref >= 180 && pred <= 70) || (ref <= 70 && pred >= 180)) return ClarkeZone::kE;
  if ((ref >= 70 && ref <= 290 && pred >= ref + 110) ||
      (ref >= 130 && ref <= 180 && pred <= 7.0 / 5.0 * ref - 182)) {
    return ClarkeZone::kC;
  }
  if ((ref >= 240 && pred >= 70 && pred <= 180) ||
      (ref <= 175.0 / 3.0 && pred <= 180 && pred >= 70) ||
      (ref >= 175.0 / 3.0 && ref <= 70 && pred >= 6.0 / 5.0 * ref)) {
    return ClarkeZone::kD;
  }
  return ClarkeZone::kB;
}

ClarkeProportions clarke_grid(std::span<const double> preds, std::span<const double> refs) {
  if (preds.size() != refs.size()) {
    throw DimensionError("clarke_grid: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(refs.size()) + " references");
  }
  if (preds.empty()) throw DataError("clarke_grid: no points");
  std::array<std::size_t, 5> counts{};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ++counts[static_cast<std::size_t>(clarke_zone(refs[i], preds[i]))];
  }
  ClarkeProportions out{};
  for (std::size_t z = 0; z < 5; ++z) {
    out[z] = static_cast<double>(counts[z]) / static_cast<double>(preds.size());
  }
  return out;
}

Correlation pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw DimensionError("pearson: " + std::to_string(xs.size()) + " vs " +
                         std::to_string(ys.size()) + " values");
  }
  const std::size_t n = xs.size();
  if (n < 2) throw DataError("pearson: at least two pairs are required");
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw NumericalError("pearson: correlation undefined for a constant sample");
  }
  Correlation c;
  c.n = n;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (n == 2) {
    c.p = std::numeric_limits<double>::quiet_NaN();
  } else if (std::abs(c.r) == 1.0) {
    c.p = 0.0;
  } else {
    const double dof = static_cast<double>(n - 2);
    c.p = student_two_sided(c.r * std::sqrt(dof / (1.0 - c.r * c.r)), dof);
  }
  return c;
}

PairedTest paired_t_test(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw DimensionError("paired_t_test: " + std::to_string(xs.size()) + " vs " +
                         std::to_string(ys.size()) + " values");
  }
  const std::size_t n = xs.size();
  if (n < 2) throw DataError("paired_t_test: at least two pairs are required");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = xs[i] - ys[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  PairedTest out;
  out.n = n;
  out.mean_difference = mean;
  if (sd == 0.0) {
    out.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    out.p = mean == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  out.p = student_two_sided(out.t, static_cast<double>(n - 1));
  return out;
}

}  // namespace sivcast::metrics
