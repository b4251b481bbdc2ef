#include "sivcast/transform.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "sivcast/error.hpp"

namespace sivcast::transform {

const char* channel_name(Channel c) {
  switch (c) {
    case Channel::kGlucose:
      return "glucose";
    case Channel::kCarbs:
      return "carbs";
    case Channel::kBolus:
      return "bolus";
  }
  return "?";
}

Channel parse_channel(const std::string& name) {
  if (name == "glucose") return Channel::kGlucose;
  if (name == "carbs") return Channel::kCarbs;
  if (name == "bolus") return Channel::kBolus;
  throw ConfigError("unknown channel '" + name + "' (expected glucose, carbs or bolus)");
}

std::span<const double> IndividualSeries::channel(Channel c) const {
  switch (c) {
    case Channel::kGlucose:
      return glucose;
    case Channel::kCarbs:
      return carbs;
    case Channel::kBolus:
      return bolus;
  }
  return {};
}

std::vector<double>& IndividualSeries::channel(Channel c) {
  switch (c) {
    case Channel::kCarbs:
      return carbs;
    case Channel::kBolus:
      return bolus;
    default:
      return glucose;
  }
}

IndividualSeries IndividualSeries::segment(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) {
    throw BoundsError("segment [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") outside series of length " + std::to_string(size()));
  }
  IndividualSeries out;
  out.id = id;
  out.first_index = first_index + begin;
  out.glucose.assign(glucose.begin() + begin, glucose.begin() + end);
  out.carbs.assign(carbs.begin() + begin, carbs.begin() + end);
  out.bolus.assign(bolus.begin() + begin, bolus.begin() + end);
  return out;
}

double ScaleSpec::divisor(Channel c) const {
  switch (c) {
    case Channel::kGlucose:
      return glucose;
    case Channel::kCarbs:
      return carbs;
    case Channel::kBolus:
      return bolus;
  }
  return 1.0;
}

std::vector<double> sum_total(std::span<const double> siv_window) {
  std::vector<double> out(siv_window.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < siv_window.size(); ++t) {
    if (siv_window[t] < 0.0) {
      throw DataError("sum_total: negative SIV value " + std::to_string(siv_window[t]) +
                      " at offset " + std::to_string(t));
    }
    acc += siv_window[t];
    out[t] = acc;
  }
  return out;
}

namespace {

IndividualSeries apply_divisors(const IndividualSeries& series, const ScaleSpec& spec,
                                bool inverse) {
  for (double d : {spec.glucose, spec.carbs, spec.bolus}) {
    if (!(d > 0.0)) throw ContractError("scale divisors must be positive");
  }
  IndividualSeries out = series;
  for (auto c : {Channel::kGlucose, Channel::kCarbs, Channel::kBolus}) {
    const double d = spec.divisor(c);
    for (auto& v : out.channel(c)) v = inverse ? v * d : v / d;
  }
  return out;
}

}  // namespace

IndividualSeries scale(const IndividualSeries& series, const ScaleSpec& spec) {
  return apply_divisors(series, spec, false);
}

IndividualSeries unscale(const IndividualSeries& series, const ScaleSpec& spec) {
  return apply_divisors(series, spec, true);
}

IndividualSeries zero_sivs(const IndividualSeries& series) {
  IndividualSeries out = series;
  std::fill(out.carbs.begin(), out.carbs.end(), 0.0);
  std::fill(out.bolus.begin(), out.bolus.end(), 0.0);
  return out;
}

bool WindowSet::has_siv(std::size_t n, std::size_t siv) const {
  for (std::size_t t = 0; t < input_length; ++t) {
    if (input(n, t, 1 + siv) != 0.0) return true;
  }
  return false;
}

bool WindowSet::has_any_siv(std::size_t n) const {
  for (std::size_t s = 0; s + 1 < channels; ++s) {
    if (has_siv(n, s)) return true;
  }
  return false;
}

WindowSet WindowSet::subset(std::span<const std::size_t> indices) const {
  WindowSet out;
  out.individual = individual;
  out.input_length = input_length;
  out.horizon = horizon;
  out.channels = channels;
  const std::size_t stride = input_length * channels;
  for (auto n : indices) {
    if (n >= size()) throw BoundsError("window index " + std::to_string(n) + " out of range");
    out.inputs.insert(out.inputs.end(), inputs.begin() + n * stride,
                      inputs.begin() + (n + 1) * stride);
    out.labels.insert(out.labels.end(), labels.begin() + n * horizon,
                      labels.begin() + (n + 1) * horizon);
    out.starts.push_back(starts[n]);
  }
  return out;
}

WindowSet make_windows(const IndividualSeries& series, const WindowOptions& options) {
  const std::size_t T = options.input_length;
  const std::size_t h = options.horizon;
  if (T == 0 || h == 0) throw ContractError("make_windows: T and h must be positive");
  const std::size_t L = series.size();
  if (L < T + h) {
    throw DataError("series '" + series.id + "' has " + std::to_string(L) +
                    " points, fewer than T+h=" + std::to_string(T + h));
  }
  WindowSet ws;
  ws.individual = series.id;
  ws.input_length = T;
  ws.horizon = h;
  ws.channels = 1 + options.sivs.size();
  const std::size_t C = ws.channels;

  std::vector<std::span<const double>> siv_channels;
  for (auto c : options.sivs) siv_channels.push_back(series.channel(c));

  std::vector<double> raw(T);
  for (std::size_t s = 0; s + T + h <= L; ++s) {
    bool missing = false;
    for (std::size_t k = s; k < s + T + h && !missing; ++k) {
      missing = std::isnan(series.glucose[k]);
    }
    if (missing) continue;
    const std::size_t base = ws.inputs.size();
    ws.inputs.resize(base + T * C);
    for (std::size_t t = 0; t < T; ++t) ws.inputs[base + t * C] = series.glucose[s + t];
    for (std::size_t i = 0; i < siv_channels.size(); ++i) {
      std::copy_n(siv_channels[i].begin() + s, T, raw.begin());
      std::vector<double> values = options.sum_total ? sum_total(raw) : raw;
      if (!options.sum_total) {
        for (double v : values) {
          if (v < 0.0) throw DataError("make_windows: negative SIV value in '" + series.id + "'");
        }
      }
      for (std::size_t t = 0; t < T; ++t) ws.inputs[base + t * C + 1 + i] = values[t];
    }
    for (std::size_t j = 0; j < h; ++j) ws.labels.push_back(series.glucose[s + T + j]);
    ws.starts.push_back(s);
  }
  return ws;
}

SeriesSplit split(const IndividualSeries& series, const SplitFractions& fractions,
                  std::size_t min_segment) {
  const double total = fractions.train + fractions.validation + fractions.test;
  if (std::abs(total - 1.0) > 1e-9 || fractions.train < 0 || fractions.validation < 0 ||
      fractions.test < 0) {
    throw ContractError("split fractions must be nonnegative and sum to 1");
  }
  const std::size_t L = series.size();
  const auto n_val = static_cast<std::size_t>(std::floor(L * fractions.validation + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(L * fractions.test + 1e-9));
  const std::size_t n_train = L - n_val - n_test;
  for (auto [name, n] : {std::pair{"training", n_train}, std::pair{"validation", n_val},
                         std::pair{"test", n_test}}) {
    if (n < min_segment) {
      throw DataError(std::string(name) + " segment of '" + series.id + "' has " +
                      std::to_string(n) + " points, need at least " +
                      std::to_string(min_segment));
    }
  }
  return {series.segment(0, n_train), series.segment(n_train, n_train + n_val),
          series.segment(n_train + n_val, L)};
}

WindowSplits prepare_windows(const IndividualSeries& raw, const ScaleSpec& scale_spec,
                             const WindowOptions& options, const SplitFractions& fractions) {
  auto parts = split(raw, fractions, options.input_length + options.horizon);
  return {make_windows(scale(parts.train, scale_spec), options),
          make_windows(scale(parts.validation, scale_spec), options),
          make_windows(scale(parts.test, scale_spec), options)};
}

// CSV -----------------------------------------------------------------------

namespace {

constexpr const char* kHeader = "t,glucose,carbs,bolus";

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_number(const std::string& field, std::size_t row, const char* column) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0' || !std::isfinite(v)) {
    throw DataError("row " + std::to_string(row) + ", column " + column +
                    ": cannot parse '" + field + "'");
  }
  return v;
}

}  // namespace

void write_series_csv(std::ostream& out, const IndividualSeries& series) {
  out << kHeader << '\n';
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << (series.first_index + i) << ',';
    if (!std::isnan(series.glucose[i])) out << format_value(series.glucose[i]);
    out << ',' << format_value(series.carbs[i]) << ',' << format_value(series.bolus[i])
        << '\n';
  }
}

IndividualSeries read_series_csv(std::istream& in, const std::string& id) {
  IndividualSeries s;
  s.id = id;
  std::string line;
  if (!std::getline(in, line)) throw DataError("row 1: empty file, expected header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) {
    throw DataError("row 1: header must be '" + std::string(kHeader) + "', found '" + line + "'");
  }
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto f = split_fields(line);
    if (f.size() != 4) {
      throw DataError("row " + std::to_string(row) + ": expected 4 columns, found " +
                      std::to_string(f.size()));
    }
    const double t = parse_number(f[0], row, "t");
    if (t < 0 || t != std::floor(t)) {
      throw DataError("row " + std::to_string(row) + ", column t: not a nonnegative integer");
    }
    const auto ti = static_cast<std::size_t>(t);
    if (s.size() == 0) {
      s.first_index = ti;
    } else if (ti != s.first_index + s.size()) {
      throw DataError("row " + std::to_string(row) + ", column t: expected " +
                      std::to_string(s.first_index + s.size()) + ", found " + f[0]);
    }
    s.glucose.push_back(f[1].empty() ? std::numeric_limits<double>::quiet_NaN()
                                     : parse_number(f[1], row, "glucose"));
    const double carbs = f[2].empty() ? 0.0 : parse_number(f[2], row, "carbs");
    const double bolus = f[3].empty() ? 0.0 : parse_number(f[3], row, "bolus");
    if (carbs < 0.0 || bolus < 0.0) {
      throw DataError("row " + std::to_string(row) + ", column " +
                      (carbs < 0.0 ? "carbs" : "bolus") + ": negative value");
    }
    s.carbs.push_back(carbs);
    s.bolus.push_back(bolus);
  }
  return s;
}

void save_series_csv(const std::filesystem::path& path, const IndividualSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_series_csv(out, series);
  if (!out) throw IoError("failed writing " + path.string());
}

IndividualSeries load_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_series_csv(in, path.stem().string());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace sivcast::transform
