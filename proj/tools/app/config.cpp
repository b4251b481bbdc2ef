#include "config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "sivcast/error.hpp"
#include "sivcast/seed.hpp"

namespace sivcast::app {

namespace {

using Channel = transform::Channel;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

// Shortest text that reads back to the same double.
std::string fmt_double(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

template <class T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + f(xs[i]);
  return out;
}

struct Field {
  const char* section;
  const char* key;
  const char* doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIV_DOUBLE(sec, name, member, doc)                                        \
  Field {                                                                         \
    sec, name, doc, [](RunConfig& c, const std::string& v) { c.member = to_double(v); }, \
        [](const RunConfig& c) { return fmt_double(c.member); }                   \
  }
#define SIV_UINT(sec, name, member, doc)                                                       \
  Field {                                                                                      \
    sec, name, doc,                                                                            \
        [](RunConfig& c, const std::string& v) {                                               \
          c.member = static_cast<decltype(c.member)>(to_uint(v));                              \
        },                                                                                     \
        [](const RunConfig& c) { return std::to_string(c.member); }                            \
  }
#define SIV_BOOL(sec, name, member, doc)                                                     \
  Field {                                                                                    \
    sec, name, doc, [](RunConfig& c, const std::string& v) { c.member = to_bool(v); },       \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }          \
  }

std::string doubles(const std::vector<double>& xs) {
  return join<double>(xs, [](const double& x) { return fmt_double(x); });
}

std::vector<double> parse_doubles(const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(item));
  return out;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      // [data]
      {"data", "generator", "toy or physio",
       [](RunConfig& c, const std::string& v) { c.data.generator = datagen::parse_generator(v); },
       [](const RunConfig& c) { return std::string(datagen::generator_name(c.data.generator)); }},
      SIV_UINT("data", "individuals", data.individuals, "number of simulated individuals"),
      SIV_UINT("data", "seed", data.seed, "dataset seed; per-individual seeds derive from it"),
      SIV_UINT("data", "toy_length", data.toy.length, "toy series length in timepoints"),
      SIV_DOUBLE("data", "toy_baseline", data.toy.baseline, "toy oscillation centre"),
      SIV_DOUBLE("data", "toy_amplitude", data.toy.amplitude, "toy oscillation amplitude"),
      SIV_DOUBLE("data", "toy_period", data.toy.period, "toy oscillation period in timepoints"),
      SIV_DOUBLE("data", "toy_gain", data.toy.gain, "toy response slope per event unit"),
      SIV_UINT("data", "toy_duration", data.toy.duration, "toy response rise time in steps"),
      SIV_DOUBLE("data", "toy_event_rate", data.toy.event_rate, "toy event probability per step"),
      SIV_DOUBLE("data", "toy_magnitude_min", data.toy.magnitude_min, "smallest toy event"),
      SIV_DOUBLE("data", "toy_magnitude_max", data.toy.magnitude_max, "largest toy event"),
      SIV_DOUBLE("data", "toy_noise_sd", data.toy.noise_sd, "Gaussian noise on the toy target"),
      SIV_UINT("data", "physio_days", data.physio.days, "simulated days per individual"),
      SIV_DOUBLE("data", "physio_meal_min", data.physio.meal_min, "smallest meal in g"),
      SIV_DOUBLE("data", "physio_meal_max", data.physio.meal_max, "largest meal in g"),
      SIV_DOUBLE("data", "physio_meal_jitter", data.physio.meal_jitter,
                 "meal time jitter in minutes"),
      SIV_DOUBLE("data", "physio_bolus_delay_min", data.physio.bolus_delay_min,
                 "shortest bolus delay in minutes"),
      SIV_DOUBLE("data", "physio_bolus_delay_max", data.physio.bolus_delay_max,
                 "longest bolus delay in minutes"),
      SIV_DOUBLE("data", "physio_delay_probability", data.physio.delay_probability,
                 "share of delayed boluses"),
      SIV_DOUBLE("data", "physio_noise_sd", data.physio.noise_sd, "CGM noise in mg/dL"),
      SIV_DOUBLE("data", "physio_carb_factor", data.physio.params.carb_factor,
                 "mg/dL of glucose per g of carbohydrate"),
      // [model]
      {"model", "method", "method trained by `train`; see `experiment` for the list",
       [](RunConfig& c, const std::string& v) {
         experiment::method_by_name(v);
         c.method = v;
       },
       [](const RunConfig& c) { return c.method; }},
      {"model", "sivs", "auto, or a list of carbs and bolus",
       [](RunConfig& c, const std::string& v) {
         c.sivs.clear();
         if (v == "auto") return;
         for (const auto& item : split_list(v)) {
           const Channel ch = transform::parse_channel(item);
           if (ch == Channel::kGlucose) throw ConfigError("glucose is the target, not an SIV");
           c.sivs.push_back(ch);
         }
         if (c.sivs.empty()) throw ConfigError("expected auto or a channel list");
       },
       [](const RunConfig& c) {
         if (c.sivs.empty()) return std::string("auto");
         return join<Channel>(c.sivs, [](const Channel& ch) { return transform::channel_name(ch); });
       }},
      SIV_UINT("model", "input_length", suite.input_length, "input window T in timepoints"),
      SIV_UINT("model", "horizon", suite.horizon, "prediction window h in timepoints"),
      SIV_UINT("model", "hidden", suite.hidden, "LSTM width H"),
      SIV_UINT("model", "layers", suite.layers, "stacked encoder layers"),
      SIV_BOOL("model", "bidirectional", suite.bidirectional, "bidirectional encoder"),
      SIV_DOUBLE("model", "scale_glucose", suite.scale.glucose, "glucose divisor"),
      SIV_DOUBLE("model", "scale_carbs", suite.scale.carbs, "carbs divisor"),
      SIV_DOUBLE("model", "scale_bolus", suite.scale.bolus, "bolus divisor"),
      SIV_DOUBLE("model", "split_train", suite.split.train, "training fraction"),
      SIV_DOUBLE("model", "split_validation", suite.split.validation, "validation fraction"),
      SIV_DOUBLE("model", "split_test", suite.split.test, "test fraction"),
      // [train]
      SIV_DOUBLE("train", "learning_rate", suite.train.lr, "Adam step size"),
      SIV_DOUBLE("train", "weight_decay", suite.train.weight_decay, "decoupled weight decay"),
      SIV_UINT("train", "batch_size", suite.train.batch_size, "windows per batch"),
      SIV_UINT("train", "min_epochs", suite.train.min_epochs, "epochs before early stopping"),
      {"train", "patience", "epochs without improvement before stopping, or inf",
       [](RunConfig& c, const std::string& v) {
         c.suite.train.patience = v == "inf" ? training::kUnlimitedPatience : to_uint(v);
       },
       [](const RunConfig& c) {
         return c.suite.train.patience == training::kUnlimitedPatience
                    ? std::string("inf")
                    : std::to_string(c.suite.train.patience);
       }},
      SIV_UINT("train", "max_epochs", suite.train.max_epochs, "hard epoch limit"),
      SIV_UINT("train", "seed", suite.train.seed, "seed used by `train`"),
      SIV_BOOL("train", "update_matching", suite.train.update_matching,
               "match gradient updates of resampling phases"),
      // [experiment]
      {"experiment", "preset", "main_table, ablations, carry_forward, noise_sweep or sign_flip",
       [](RunConfig& c, const std::string& v) { c.preset = experiment::parse_preset(v); },
       [](const RunConfig& c) { return std::string(experiment::preset_name(c.preset)); }},
      {"experiment", "methods", "overrides the preset's methods when set",
       [](RunConfig& c, const std::string& v) {
         c.suite.methods = split_list(v);
         for (const auto& m : c.suite.methods) experiment::method_by_name(m);
       },
       [](const RunConfig& c) {
         return join<std::string>(c.suite.methods, [](const std::string& s) { return s; });
       }},
      {"experiment", "seeds", "training seeds per cell",
       [](RunConfig& c, const std::string& v) {
         c.suite.seeds.clear();
         for (const auto& item : split_list(v)) c.suite.seeds.push_back(to_uint(item));
       },
       [](const RunConfig& c) {
         return join<std::uint64_t>(c.suite.seeds,
                                    [](const std::uint64_t& s) { return std::to_string(s); });
       }},
      SIV_UINT("experiment", "bootstrap_samples", suite.bootstrap_samples,
               "bootstrap resamples per interval"),
      {"experiment", "missing_levels", "carbohydrate hiding fractions for noise_sweep",
       [](RunConfig& c, const std::string& v) { c.suite.missing_levels = parse_doubles(v); },
       [](const RunConfig& c) { return doubles(c.suite.missing_levels); }},
      {"experiment", "noise_levels", "carbohydrate noise magnitudes for noise_sweep",
       [](RunConfig& c, const std::string& v) { c.suite.noise_levels = parse_doubles(v); },
       [](const RunConfig& c) { return doubles(c.suite.noise_levels); }},
      SIV_UINT("experiment", "corruption_seeds", suite.corruption_seeds,
               "corruption draws per level"),
  };
  return table;
}

#undef SIV_DOUBLE
#undef SIV_UINT
#undef SIV_BOOL

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "data" && section != "model" && section != "train" &&
          section != "experiment") {
        fail("unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) fail("key '" + key + "' appears before any section");
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (section == f.section && key == f.key) field = &f;
    }
    if (!field) fail("unknown key '" + key + "' in section [" + section + "]");
    if (!seen.insert(section + "." + key).second) fail("duplicate key '" + key + "'");
    try {
      field->set(cfg, value);
    } catch (const Error& e) {
      fail(key + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

void override_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.data.seed = seed;
  cfg.suite.train.seed = seed;
  cfg.suite.seeds = {seed};
}

std::string canonical_text(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      section = f.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_text(cfg))));
  return buf;
}

void resolve(RunConfig& cfg) {
  datagen::validate(cfg.data.toy);
  datagen::validate(cfg.data.physio);
  if (cfg.data.individuals == 0) throw ConfigError("[data] individuals must be positive");
  if (experiment::method_by_name(cfg.method).sign_flip) {
    throw ConfigError("[model] method " + cfg.method + " is evaluation-only");
  }
  cfg.suite.sivs = cfg.sivs;
  if (cfg.suite.sivs.empty()) {
    cfg.suite.sivs = {Channel::kCarbs};
    if (cfg.data.generator == datagen::Generator::kPhysio) cfg.suite.sivs.push_back(Channel::kBolus);
  }
  cfg.suite.config_hash = config_hash(cfg);
  experiment::validate(cfg.suite);
}

std::string documented_defaults() {
  const RunConfig defaults;
  std::string out, section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      section = f.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(defaults) + "  # " + f.doc + "\n";
  }
  return out;
}

}  // namespace sivcast::app
