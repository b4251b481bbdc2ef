#include "sivcast/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numbers>

#include "sivcast/error.hpp"
#include "sivcast/seed.hpp"
#include "sivcast/version.hpp"

namespace sivcast::datagen {

using transform::IndividualSeries;
using json = nlohmann::json;

namespace {

constexpr std::size_t kMinutesPerDay = 1440;
constexpr std::size_t kSampleMinutes = 5;
constexpr std::array<double, 3> kMealAnchors{480.0, 780.0, 1140.0};

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

IndividualSeries empty_series(const std::string& id, std::size_t n) {
  IndividualSeries s;
  s.id = id;
  s.glucose.assign(n, 0.0);
  s.carbs.assign(n, 0.0);
  s.bolus.assign(n, 0.0);
  return s;
}

}  // namespace

// Toy -------------------------------------------------------------------------

void validate(const ToyConfig& c) {
  require(c.period > 0.0, "toy: period must be positive");
  require(c.duration >= 1, "toy: duration must be at least 1");
  require(c.event_rate >= 0.0 && c.event_rate < 0.5,
          "toy: event_rate must lie in [0, 0.5) so events stay sparse");
  require(c.magnitude_min > 0.0 && c.magnitude_max >= c.magnitude_min,
          "toy: magnitudes must satisfy 0 < min <= max");
  require(c.length >= 1, "toy: length must be positive");
  require(c.noise_sd >= 0.0, "toy: noise_sd must be nonnegative");
}

double ramp_response(const ToyConfig& c, double magnitude, double tau) {
  const double d = static_cast<double>(c.duration);
  if (tau <= 0.0 || tau >= 2.0 * d) return 0.0;
  const double steps = tau <= d ? tau : 2.0 * d - tau;
  return c.gain * magnitude * steps;
}

IndividualSeries toy_from_events(const ToyConfig& c, const std::vector<double>& events,
                                 const std::string& id) {
  validate(c);
  if (events.size() != c.length) {
    throw ContractError("toy_from_events: " + std::to_string(events.size()) +
                        " event slots for length " + std::to_string(c.length));
  }
  IndividualSeries s = empty_series(id, c.length);
  const std::size_t reach = 2 * c.duration;
  for (std::size_t t = 0; t < c.length; ++t) {
    const double x = static_cast<double>(t) + c.phase;
    s.glucose[t] = c.baseline + c.amplitude * std::sin(2.0 * std::numbers::pi * x / c.period);
    s.carbs[t] = events[t];
  }
  for (std::size_t t0 = 0; t0 < c.length; ++t0) {
    if (events[t0] == 0.0) continue;
    for (std::size_t tau = 1; tau < reach && t0 + tau < c.length; ++tau) {
      s.glucose[t0 + tau] += ramp_response(c, events[t0], static_cast<double>(tau));
    }
  }
  return s;
}

IndividualSeries gen_toy(const ToyConfig& c, const std::string& id) {
  validate(c);
  Rng rng(derive_seed(c.seed, {0x70}));
  std::bernoulli_distribution fire(c.event_rate);
  std::uniform_real_distribution<double> size(c.magnitude_min, c.magnitude_max);
  std::vector<double> events(c.length, 0.0);
  for (auto& e : events) {
    if (fire(rng)) e = size(rng);
  }
  IndividualSeries s = toy_from_events(c, events, id);
  if (c.noise_sd > 0.0) {
    Rng noise_rng(derive_seed(c.seed, {0x71}));
    std::normal_distribution<double> noise(0.0, c.noise_sd);
    for (auto& g : s.glucose) g += noise(noise_rng);
  }
  return s;
}

// Physiology ------------------------------------------------------------------

void validate(const PhysioParams& p) {
  require(p.p1 > 0 && p.si > 0 && p.k_abs > 0 && p.k_i > 0 && p.carb_ratio > 0 &&
              p.carb_factor > 0,
          "physio: all rate constants must be positive");
  require(p.gb > 70.0 && p.gb < 180.0, "physio: basal glucose must lie in (70, 180) mg/dL");
}

PhysioParams sample_physio_params(Rng& rng) {
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  PhysioParams p;
  p.p1 = u(0.01, 0.03);
  p.si = u(0.003, 0.008);
  p.k_abs = u(0.02, 0.05);
  p.k_i = u(0.015, 0.03);
  p.gb = u(90.0, 140.0);
  p.carb_ratio = u(8.0, 15.0);
  p.carb_factor = u(3.5, 4.5);
  return p;
}

void validate(const PhysioConfig& c) {
  validate(c.params);
  require(c.days >= 1, "physio: days must be at least 1");
  require(c.meals_per_day == kMealAnchors.size(), "physio: exactly 3 meals per day are modeled");
  require(c.meal_min > 0 && c.meal_max >= c.meal_min, "physio: meal sizes need 0 < min <= max");
  require(c.meal_jitter >= 0 && c.meal_jitter < 150, "physio: meal_jitter must lie in [0, 150)");
  require(c.bolus_delay_min >= 0 && c.bolus_delay_max > c.bolus_delay_min,
          "physio: bolus delay range must be increasing and nonnegative");
  require(c.delay_probability >= 0 && c.delay_probability <= 1,
          "physio: delay_probability must lie in [0, 1]");
  require(c.noise_sd >= 0, "physio: noise_sd must be nonnegative");
}

EventSchedule schedule_events(const PhysioConfig& c, Rng& rng) {
  validate(c);
  std::uniform_real_distribution<double> jitter(-c.meal_jitter, c.meal_jitter);
  std::uniform_real_distribution<double> size(c.meal_min, c.meal_max);
  std::bernoulli_distribution delay(c.delay_probability);
  std::uniform_real_distribution<double> lag(c.bolus_delay_min, c.bolus_delay_max);
  EventSchedule out;
  for (std::size_t day = 0; day < c.days; ++day) {
    for (double anchor : kMealAnchors) {
      Event meal{static_cast<double>(day * kMinutesPerDay) + anchor + jitter(rng), size(rng)};
      const bool delayed = delay(rng);
      const double offset = delayed ? lag(rng) : 0.0;
      out.meals.push_back(meal);
      out.boluses.push_back({meal.minute + offset, meal.amount / c.params.carb_ratio});
      out.delayed.push_back(delayed);
    }
  }
  return out;
}

namespace {

struct State {
  double g, i, m;
};

State derivative(const PhysioParams& p, const State& s, double carb_rate, double bolus_rate) {
  return {-p.p1 * (s.g - p.gb) - p.si * s.i * s.g + p.k_abs * s.m,
          -p.k_i * s.i + bolus_rate,
          -p.k_abs * s.m + p.carb_factor * carb_rate};
}

State axpy(const State& s, double h, const State& d) {
  return {s.g + h * d.g, s.i + h * d.i, s.m + h * d.m};
}

}  // namespace

IndividualSeries simulate_physio(const PhysioConfig& c, const EventSchedule& events,
                                 const std::string& id) {
  validate(c);
  const std::size_t minutes = c.days * kMinutesPerDay;
  const std::size_t samples = minutes / kSampleMinutes;
  std::vector<double> carb_in(minutes, 0.0), bolus_in(minutes, 0.0);
  IndividualSeries s = empty_series(id, samples);
  auto place = [&](const std::vector<Event>& list, std::vector<double>& per_minute,
                   std::vector<double>& per_sample) {
    for (const auto& e : list) {
      if (e.minute < 0.0) continue;
      const auto m = static_cast<std::size_t>(std::floor(e.minute));
      if (m >= minutes) continue;
      per_minute[m] += e.amount;
      per_sample[m / kSampleMinutes] += e.amount;
    }
  };
  place(events.meals, carb_in, s.carbs);
  place(events.boluses, bolus_in, s.bolus);

  const PhysioParams& p = c.params;
  State st{p.gb, 0.0, 0.0};
  Rng noise_rng(derive_seed(c.seed, {0x50}));
  std::normal_distribution<double> noise(0.0, c.noise_sd > 0 ? c.noise_sd : 1.0);
  for (std::size_t t = 0; t < minutes; ++t) {
    if (t % kSampleMinutes == 0) {
      s.glucose[t / kSampleMinutes] = st.g + (c.noise_sd > 0 ? noise(noise_rng) : 0.0);
    }
    const double cu = carb_in[t], bu = bolus_in[t];
    const State k1 = derivative(p, st, cu, bu);
    const State k2 = derivative(p, axpy(st, 0.5, k1), cu, bu);
    const State k3 = derivative(p, axpy(st, 0.5, k2), cu, bu);
    const State k4 = derivative(p, axpy(st, 1.0, k3), cu, bu);
    st = {st.g + (k1.g + 2 * k2.g + 2 * k3.g + k4.g) / 6.0,
          st.i + (k1.i + 2 * k2.i + 2 * k3.i + k4.i) / 6.0,
          st.m + (k1.m + 2 * k2.m + 2 * k3.m + k4.m) / 6.0};
    if (!std::isfinite(st.g) || !std::isfinite(st.i) || !std::isfinite(st.m)) {
      throw SimulationError("physio: non-finite state at minute " + std::to_string(t + 1) +
                            " (sample " + std::to_string((t + 1) / kSampleMinutes) + ")");
    }
  }
  return s;
}

IndividualSeries simulate_physio(const PhysioConfig& c, const std::string& id) {
  Rng rng(derive_seed(c.seed, {0x5c}));
  return simulate_physio(c, schedule_events(c, rng), id);
}

// Corruption ------------------------------------------------------------------

void validate(const CorruptionSpec& s) {
  require(s.missing_fraction >= 0 && s.missing_fraction <= 1,
          "corrupt: missing_fraction must lie in [0, 1]");
  require(s.noise_magnitude >= 0 && s.noise_magnitude <= 1,
          "corrupt: noise_magnitude must lie in [0, 1]");
  require(s.channel != transform::Channel::kGlucose, "corrupt: the target channel cannot be corrupted");
}

IndividualSeries corrupt(const IndividualSeries& series, const CorruptionSpec& spec) {
  validate(spec);
  IndividualSeries out = series;
  if (spec.missing_fraction == 0.0 && spec.noise_magnitude == 0.0) return out;
  Rng rng(derive_seed(spec.seed, {fnv1a64(series.id)}));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-spec.noise_magnitude, spec.noise_magnitude);
  for (auto& v : out.channel(spec.channel)) {
    if (v == 0.0) continue;
    // Both draws happen for every event so that masks and noise stay aligned
    // across corruption levels under one seed.
    const double hide = coin(rng);
    const double u = jitter(rng);
    if (hide < spec.missing_fraction) {
      v = 0.0;
    } else if (spec.noise_magnitude > 0.0) {
      v = std::max(0.0, v * (1.0 + u));
    }
  }
  return out;
}

// Datasets --------------------------------------------------------------------

const char* generator_name(Generator g) { return g == Generator::kToy ? "toy" : "physio"; }

Generator parse_generator(const std::string& name) {
  if (name == "toy") return Generator::kToy;
  if (name == "physio") return Generator::kPhysio;
  throw ConfigError("unknown generator '" + name + "' (expected toy or physio)");
}

std::string individual_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ind%02zu", index);
  return buf;
}

GeneratedIndividual generate_individual(const DatasetConfig& cfg, std::size_t index) {
  GeneratedIndividual g;
  g.seed = derive_seed(cfg.seed, {index});
  const std::string id = individual_id(index);
  if (cfg.generator == Generator::kToy) {
    ToyConfig toy = cfg.toy;
    toy.seed = g.seed;
    Rng rng(derive_seed(g.seed, {0x7a}));
    toy.phase = std::uniform_real_distribution<double>(0.0, toy.period)(rng);
    g.series = gen_toy(toy, id);
    return g;
  }
  PhysioConfig physio = cfg.physio;
  physio.seed = g.seed;
  Rng param_rng(derive_seed(g.seed, {0x9a}));
  physio.params = sample_physio_params(param_rng);
  physio.params.carb_factor = cfg.physio.params.carb_factor;
  Rng event_rng(derive_seed(g.seed, {0x5c}));
  g.params = physio.params;
  g.events = schedule_events(physio, event_rng);
  g.series = simulate_physio(physio, g.events, id);
  return g;
}

std::vector<GeneratedIndividual> generate_dataset(const DatasetConfig& cfg) {
  if (cfg.individuals == 0) throw ContractError("dataset: at least one individual is required");
  std::vector<GeneratedIndividual> out;
  out.reserve(cfg.individuals);
  for (std::size_t i = 0; i < cfg.individuals; ++i) out.push_back(generate_individual(cfg, i));
  return out;
}

namespace {

json events_json(const std::vector<Event>& events) {
  json a = json::array();
  for (const auto& e : events) a.push_back({e.minute, e.amount});
  return a;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const DatasetConfig& cfg,
                   const std::vector<GeneratedIndividual>& data, const std::string& config_hash) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json manifest;
  manifest["generator"] = generator_name(cfg.generator);
  manifest["seed"] = cfg.seed;
  manifest["config_hash"] = config_hash;
  manifest["version"] = kVersion;
  manifest["individuals"] = json::array();
  for (const auto& g : data) {
    const std::string file = g.series.id + ".csv";
    transform::save_series_csv(dir / file, g.series);
    json entry{{"id", g.series.id}, {"file", file}, {"seed", g.seed}, {"length", g.series.size()}};
    if (cfg.generator == Generator::kPhysio) {
      const auto& p = g.params;
      entry["params"] = {{"p1", p.p1},           {"si", p.si},
                         {"k_abs", p.k_abs},     {"k_i", p.k_i},
                         {"gb", p.gb},           {"carb_ratio", p.carb_ratio},
                         {"carb_factor", p.carb_factor}};
      entry["meals"] = events_json(g.events.meals);
      entry["boluses"] = events_json(g.events.boluses);
      entry["delayed"] = g.events.delayed;
    } else {
      std::size_t n = 0;
      for (double v : g.series.carbs) n += v != 0.0;
      entry["events"] = n;
    }
    manifest["individuals"].push_back(std::move(entry));
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + (dir / "manifest.json").string());
}

std::vector<IndividualSeries> load_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  std::vector<IndividualSeries> out;
  try {
    for (const auto& entry : manifest.at("individuals")) {
      out.push_back(transform::load_series_csv(dir / entry.at("file").get<std::string>()));
      out.back().id = entry.at("id").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace sivcast::datagen
