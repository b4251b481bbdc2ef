#pragma once

// Series representation, 0-1 scaling, windowing and chronological splitting.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace sivcast::transform {

enum class Channel { kGlucose = 0, kCarbs = 1, kBolus = 2 };

const char* channel_name(Channel c);
Channel parse_channel(const std::string& name);

/// One individual's aligned 5-minute series. Missing glucose is NaN; SIV
/// channels are raw nonnegative magnitudes, zero where nothing happened.
struct IndividualSeries {
  std::string id;
  std::size_t first_index = 0;  // value of the CSV t column for element 0
  std::vector<double> glucose;
  std::vector<double> carbs;
  std::vector<double> bolus;

  std::size_t size() const { return glucose.size(); }
  std::span<const double> channel(Channel c) const;
  std::vector<double>& channel(Channel c);
  /// Elements [begin, end) as a new series.
  IndividualSeries segment(std::size_t begin, std::size_t end) const;
};

/// Divisors mapping raw units onto roughly [0, 1].
struct ScaleSpec {
  double glucose = 400.0;
  double carbs = 200.0;
  double bolus = 50.0;

  double divisor(Channel c) const;
};

/// Running prefix sum restricted to the window. Throws DataError on a
/// negative entry.
std::vector<double> sum_total(std::span<const double> siv_window);

/// Channelwise division by the spec's divisors; no clamping.
IndividualSeries scale(const IndividualSeries& series, const ScaleSpec& spec);
IndividualSeries unscale(const IndividualSeries& series, const ScaleSpec& spec);

/// Copy of `series` with every SIV channel set to zero.
IndividualSeries zero_sivs(const IndividualSeries& series);

struct WindowOptions {
  std::size_t input_length = 24;  // T
  std::size_t horizon = 6;        // h
  std::vector<Channel> sivs{Channel::kCarbs, Channel::kBolus};
  bool sum_total = true;
};

/// Stride-1 windows. Input channel 0 is the target; channel 1+i is sivs[i]
/// (prefix-summed within each window when sum_total is set).
struct WindowSet {
  std::string individual;
  std::size_t input_length = 0;
  std::size_t horizon = 0;
  std::size_t channels = 0;
  std::vector<double> inputs;        // N × T × C
  std::vector<double> labels;        // N × h
  std::vector<std::size_t> starts;   // series offset of each window

  std::size_t size() const { return starts.size(); }
  double input(std::size_t n, std::size_t t, std::size_t c) const {
    return inputs[(n * input_length + t) * channels + c];
  }
  double label(std::size_t n, std::size_t j) const { return labels[n * horizon + j]; }
  /// True when SIV channel `siv` (0-based among SIVs) is nonzero anywhere in window n.
  bool has_siv(std::size_t n, std::size_t siv) const;
  bool has_any_siv(std::size_t n) const;
  /// Windows selected by index, in the given order.
  WindowSet subset(std::span<const std::size_t> indices) const;
};

/// Builds windows from an already scaled series. Windows with a missing
/// target value in either part are skipped. Throws DataError when the series
/// is shorter than T+h.
WindowSet make_windows(const IndividualSeries& series, const WindowOptions& options);

struct SplitFractions {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

struct SeriesSplit {
  IndividualSeries train;
  IndividualSeries validation;
  IndividualSeries test;
};

/// Contiguous chronological split. Validation and test get floor(L*fraction)
/// points, training gets the remainder. Throws DataError when a segment is
/// shorter than `min_segment`.
SeriesSplit split(const IndividualSeries& series, const SplitFractions& fractions,
                  std::size_t min_segment);

struct WindowSplits {
  WindowSet train;
  WindowSet validation;
  WindowSet test;
};

/// split -> scale -> make_windows per segment.
WindowSplits prepare_windows(const IndividualSeries& raw, const ScaleSpec& scale_spec,
                             const WindowOptions& options,
                             const SplitFractions& fractions = {});

// CSV: header `t,glucose,carbs,bolus`, t an integer 5-minute index, missing
// glucose as an empty field, carbs/bolus empty meaning 0.

void write_series_csv(std::ostream& out, const IndividualSeries& series);
IndividualSeries read_series_csv(std::istream& in, const std::string& id);
void save_series_csv(const std::filesystem::path& path, const IndividualSeries& series);
IndividualSeries load_series_csv(const std::filesystem::path& path);

}  // namespace sivcast::transform
