#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "sivcast/autodiff.hpp"
#include "sivcast/transform.hpp"

namespace sivcast::testing {

/// Random windows: target channel uniform in [0.2, 0.6], each SIV channel
/// nonzero at a timepoint with probability `siv_rate`.
inline transform::WindowSet random_windows(std::size_t n, std::size_t T, std::size_t h,
                                           std::size_t sivs, double siv_rate,
                                           std::mt19937_64& rng) {
  std::uniform_real_distribution<double> target(0.2, 0.6), mag(0.05, 0.4);
  std::bernoulli_distribution event(siv_rate);
  transform::WindowSet w;
  w.individual = "synthetic";
  w.input_length = T;
  w.horizon = h;
  w.channels = 1 + sivs;
  w.inputs.resize(n * T * w.channels);
  w.labels.resize(n * h);
  for (std::size_t k = 0; k < n; ++k) {
    w.starts.push_back(k);
    for (std::size_t t = 0; t < T; ++t) {
      w.inputs[(k * T + t) * w.channels] = target(rng);
      for (std::size_t s = 0; s < sivs; ++s) {
        w.inputs[(k * T + t) * w.channels + 1 + s] = event(rng) ? mag(rng) : 0.0;
      }
    }
    for (std::size_t j = 0; j < h; ++j) w.labels[k * h + j] = target(rng);
  }
  return w;
}

/// Redraws every parameter uniformly from [-0.5, 0.5]. Fresh LSTMs have zero
/// gate biases, which leaves undriven decoder outputs exactly on the ReLU kink
/// where finite differences are meaningless.
inline void randomize_parameters(std::vector<ad::DArray>& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  for (auto& p : params) {
    for (auto& v : p.mutable_values()) v = d(rng);
  }
}

}  // namespace sivcast::testing
