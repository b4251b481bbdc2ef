#include "sivcast/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "sivcast/datagen.hpp"
#include "sivcast/error.hpp"
#include "sivcast/seed.hpp"
#include "sivcast/version.hpp"

namespace sivcast::experiment {

namespace fs = std::filesystem;
using json = nlohmann::json;
using model::Architecture;
using model::LinkedModel;
using transform::IndividualSeries;
using transform::WindowSplits;

// Evaluation ------------------------------------------------------------------

Evaluation evaluate(const LinkedModel& m, const transform::WindowSet& test,
                    const transform::ScaleSpec& scale, std::size_t bootstrap_samples,
                    std::uint64_t bootstrap_seed) {
  if (test.size() == 0) throw DataError("evaluate: empty test set");
  const double k = scale.divisor(transform::Channel::kGlucose);
  auto preds = training::predict(m, test);
  std::vector<double> labels(test.labels.begin(), test.labels.end());
  for (auto& v : preds) v *= k;
  for (auto& v : labels) v *= k;

  Evaluation e;
  e.n_windows = test.size();
  e.errors = metrics::final_point_errors(preds, labels, test.horizon);
  auto residuals = metrics::final_point_residuals(preds, labels, test.horizon);
  std::mt19937_64 rng(bootstrap_seed);
  e.rmse_ci = metrics::bootstrap_ci(residuals, metrics::Metric::kRmse, bootstrap_samples, 0.95, rng);
  e.mae_ci = metrics::bootstrap_ci(residuals, metrics::Metric::kMae, bootstrap_samples, 0.95, rng);

  std::vector<double> final_pred(test.size()), final_ref(test.size());
  for (std::size_t n = 0; n < test.size(); ++n) {
    const std::size_t idx = n * test.horizon + test.horizon - 1;
    final_pred[n] = std::max(preds[idx], 1.0);
    final_ref[n] = labels[idx];
  }
  e.clarke = metrics::clarke_grid(final_pred, final_ref);
  return e;
}

// Methods ---------------------------------------------------------------------

namespace {

const std::vector<Method>& method_table() {
  static const std::vector<Method> table{
      {"enc_dec", Architecture::kEncDec, Procedure::kStandard, true, false},
      {"proposed", Architecture::kProposed, Procedure::kStandard, true, false},
      {"full_capacity", Architecture::kFullCapacity, Procedure::kStandard, true, false},
      {"siv_initialize", Architecture::kEncDec, Procedure::kSivInitialize, true, false},
      {"siv_finetune", Architecture::kEncDec, Procedure::kSivFinetune, true, false},
      {"no_gating", Architecture::kNoGating, Procedure::kStandard, true, false},
      {"no_restriction", Architecture::kNoRestriction, Procedure::kStandard, true, false},
      {"no_siv_input", Architecture::kNoSivInput, Procedure::kStandard, true, false},
      {"only_siv_input", Architecture::kOnlySivInput, Procedure::kStandard, true, false},
      {"proposed_raw", Architecture::kProposed, Procedure::kStandard, false, false},
      {"enc_dec_raw", Architecture::kEncDec, Procedure::kStandard, false, false},
      {"proposed_sign_flip", Architecture::kProposed, Procedure::kStandard, true, true},
  };
  return table;
}

}  // namespace

Method method_by_name(const std::string& name) {
  for (const auto& m : method_table()) {
    if (m.name == name) return m;
  }
  throw ConfigError("unknown method '" + name + "'");
}

std::vector<std::string> method_names() {
  std::vector<std::string> out;
  for (const auto& m : method_table()) out.push_back(m.name);
  return out;
}

std::string null_class(const Method& m) {
  const auto mech = model::mechanisms(m.architecture);
  // Gated SIV decoders never run on all-zero SIVs; their parameters receive no
  // gradient, so training matches Enc/Dec from the same seed bit for bit.
  if (!mech.siv_input_to_theta && (!mech.siv_decoders || mech.gating)) return "enc_dec";
  return model::architecture_name(m.architecture);
}

const char* preset_name(Preset p) {
  switch (p) {
    case Preset::kMainTable:
      return "main_table";
    case Preset::kAblations:
      return "ablations";
    case Preset::kCarryForward:
      return "carry_forward";
    case Preset::kNoiseSweep:
      return "noise_sweep";
    case Preset::kSignFlip:
      return "sign_flip";
  }
  return "?";
}

Preset parse_preset(const std::string& name) {
  for (auto p : {Preset::kMainTable, Preset::kAblations, Preset::kCarryForward,
                 Preset::kNoiseSweep, Preset::kSignFlip}) {
    if (name == preset_name(p)) return p;
  }
  throw ConfigError("unknown preset '" + name +
                    "' (expected main_table, ablations, carry_forward, noise_sweep or sign_flip)");
}

std::vector<std::string> preset_methods(Preset p) {
  switch (p) {
    case Preset::kMainTable:
      return {"enc_dec", "siv_finetune", "siv_initialize", "full_capacity", "proposed"};
    case Preset::kAblations:
      return {"proposed", "no_gating", "no_restriction", "no_siv_input", "only_siv_input"};
    case Preset::kCarryForward:
      return {"enc_dec", "enc_dec_raw", "proposed", "proposed_raw"};
    case Preset::kNoiseSweep:
      return {"enc_dec", "proposed"};
    case Preset::kSignFlip:
      return {"proposed", "proposed_sign_flip"};
  }
  return {};
}

// Cells -------------------------------------------------------------------------

std::string Corruption::label() const {
  if (clean()) return "clean";
  char buf[64];
  std::snprintf(buf, sizeof buf, "m%.2f_n%.2f_c%llu", missing, noise,
                static_cast<unsigned long long>(seed));
  return buf;
}

fs::path CellKey::dir() const {
  return fs::path(method) / individual / corruption.label() / ("s" + std::to_string(seed));
}

void validate(const SuiteConfig& c) {
  if (c.sivs.empty()) throw ConfigError("suite: at least one SIV channel is required");
  if (c.input_length == 0 || c.horizon == 0 || c.hidden == 0 || c.layers == 0) {
    throw ConfigError("suite: model dimensions must be positive");
  }
  if (c.seeds.empty()) throw ConfigError("suite: at least one seed is required");
  if (c.bootstrap_samples < 100) throw ConfigError("suite: bootstrap_samples must be >= 100");
  training::validate(c.train);
  for (double v : c.missing_levels) {
    if (v < 0 || v > 1) throw ConfigError("suite: missing levels must lie in [0, 1]");
  }
  for (double v : c.noise_levels) {
    if (v < 0 || v > 1) throw ConfigError("suite: noise levels must lie in [0, 1]");
  }
  for (const auto& m : c.methods) method_by_name(m);
}

std::vector<CellKey> plan_cells(Preset preset, const std::vector<IndividualSeries>& data,
                                const SuiteConfig& cfg) {
  validate(cfg);
  std::vector<Corruption> corruptions{Corruption{}};
  if (preset == Preset::kNoiseSweep) {
    for (std::uint64_t cs = 1; cs <= cfg.corruption_seeds; ++cs) {
      for (double m : cfg.missing_levels) {
        if (m > 0.0) corruptions.push_back({m, 0.0, cs});
      }
      for (double n : cfg.noise_levels) {
        if (n > 0.0) corruptions.push_back({0.0, n, cs});
      }
    }
  }
  const auto methods = cfg.methods.empty() ? preset_methods(preset) : cfg.methods;
  std::vector<CellKey> out;
  for (const auto& name : methods) {
    const Method method = method_by_name(name);
    for (const auto& s : data) {
      for (const auto& c : corruptions) {
        if (method.sign_flip && !c.clean()) continue;
        for (auto seed : cfg.seeds) out.push_back({name, s.id, c, seed});
      }
    }
  }
  return out;
}

// Persistence -------------------------------------------------------------------

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double get_num(const json& j, const char* key) {
  const auto& v = j.at(key);
  return v.is_null() ? kNaN : v.get<double>();
}

json cell_json(const CellResult& c) {
  json clarke = json::array();
  for (double v : c.clarke) clarke.push_back(num(v));
  return json{{"method", c.key.method},
              {"individual", c.key.individual},
              {"missing_fraction", c.key.corruption.missing},
              {"noise_magnitude", c.key.corruption.noise},
              {"corruption_seed", c.key.corruption.seed},
              {"seed", c.key.seed},
              {"status", c.status},
              {"error", c.error},
              {"n_windows", c.n_windows},
              {"rmse", num(c.rmse)},
              {"rmse_ci", {num(c.rmse_ci.lo), num(c.rmse_ci.hi)}},
              {"mae", num(c.mae)},
              {"mae_ci", {num(c.mae_ci.lo), num(c.mae_ci.hi)}},
              {"null_rmse", num(c.null_rmse)},
              {"null_mae", num(c.null_mae)},
              {"usage_rmse", num(c.usage_rmse)},
              {"usage_mae", num(c.usage_mae)},
              {"clarke", clarke},
              {"epochs", c.epochs},
              {"updates", c.updates},
              {"config_hash", c.config_hash},
              {"version", c.version}};
}

CellResult cell_from_json(const json& j) {
  auto pair = [](const json& a) {
    return metrics::Interval{a.at(0).is_null() ? kNaN : a.at(0).get<double>(),
                             a.at(1).is_null() ? kNaN : a.at(1).get<double>()};
  };
  CellResult c;
  c.key.method = j.at("method").get<std::string>();
  c.key.individual = j.at("individual").get<std::string>();
  c.key.corruption.missing = j.at("missing_fraction").get<double>();
  c.key.corruption.noise = j.at("noise_magnitude").get<double>();
  c.key.corruption.seed = j.at("corruption_seed").get<std::uint64_t>();
  c.key.seed = j.at("seed").get<std::uint64_t>();
  c.status = j.at("status").get<std::string>();
  c.error = j.at("error").get<std::string>();
  c.n_windows = j.at("n_windows").get<std::size_t>();
  c.rmse = get_num(j, "rmse");
  c.rmse_ci = pair(j.at("rmse_ci"));
  c.mae = get_num(j, "mae");
  c.mae_ci = pair(j.at("mae_ci"));
  c.null_rmse = get_num(j, "null_rmse");
  c.null_mae = get_num(j, "null_mae");
  c.usage_rmse = get_num(j, "usage_rmse");
  c.usage_mae = get_num(j, "usage_mae");
  const auto& clarke = j.at("clarke");
  for (std::size_t z = 0; z < 5; ++z) {
    c.clarke[z] = clarke.at(z).is_null() ? kNaN : clarke.at(z).get<double>();
  }
  c.epochs = j.at("epochs").get<std::size_t>();
  c.updates = j.at("updates").get<std::size_t>();
  c.config_hash = j.at("config_hash").get<std::string>();
  c.version = j.at("version").get<std::string>();
  return c;
}

void write_json_atomically(const fs::path& path, const json& j) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

bool cell_less(const CellResult& a, const CellResult& b) {
  const auto& x = a.key;
  const auto& y = b.key;
  return std::tie(x.method, x.individual, x.corruption.missing, x.corruption.noise,
                  x.corruption.seed, x.seed) < std::tie(y.method, y.individual,
                                                        y.corruption.missing, y.corruption.noise,
                                                        y.corruption.seed, y.seed);
}

}  // namespace

void save_cell(const fs::path& path, const CellResult& cell) {
  write_json_atomically(path, cell_json(cell));
}

CellResult load_cell(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    json j;
    in >> j;
    return cell_from_json(j);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<CellResult> load_cells(const fs::path& run_dir) {
  std::vector<CellResult> out;
  const fs::path root = run_dir / "cells";
  if (!fs::exists(root)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "result.json") {
      out.push_back(load_cell(entry.path()));
    }
  }
  std::sort(out.begin(), out.end(), cell_less);
  return out;
}

// Running ------------------------------------------------------------------------

namespace {

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(jobs, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct NullKey {
  std::string cls;
  std::string individual;
  std::uint64_t seed;
  auto operator<=>(const NullKey&) const = default;
  fs::path dir() const { return fs::path(cls) / individual / ("s" + std::to_string(seed)); }
};

struct NullResult {
  bool ok = false;
  double rmse = kNaN;
  double mae = kNaN;
};

class Runner {
 public:
  Runner(const std::vector<IndividualSeries>& data, const SuiteConfig& cfg, fs::path run_dir,
         const ProgressCallback& progress)
      : cfg_(cfg), run_dir_(std::move(run_dir)), progress_(progress) {
    for (const auto& s : data) {
      if (!series_.emplace(s.id, &s).second) {
        throw DataError("duplicate individual id '" + s.id + "'");
      }
    }
  }

  std::vector<CellResult> run(const std::vector<CellKey>& cells) {
    // f∅ runs first; every cell's usage depends on one of them.
    std::set<NullKey> null_keys;
    for (const auto& k : cells) {
      const Method m = method_by_name(k.method);
      if (!m.sign_flip) null_keys.insert(null_key(m, k));
    }
    std::vector<NullKey> nulls(null_keys.begin(), null_keys.end());
    for (const auto& k : nulls) null_results_[k];
    parallel_for(nulls.size(), cfg_.jobs, [&](std::size_t i) { run_null(nulls[i]); });

    std::vector<CellResult> results(cells.size());
    std::vector<std::size_t> trained, derived;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      (method_by_name(cells[i].method).sign_flip ? derived : trained).push_back(i);
    }
    for (std::size_t i : derived) wanted_models_.insert(source_key(cells[i]).dir().string());
    parallel_for(trained.size(), cfg_.jobs,
                 [&](std::size_t i) { results[trained[i]] = run_cell(cells[trained[i]]); });
    parallel_for(derived.size(), cfg_.jobs,
                 [&](std::size_t i) { results[derived[i]] = run_cell(cells[derived[i]]); });
    return results;
  }

 private:
  const SuiteConfig& cfg_;
  fs::path run_dir_;
  const ProgressCallback& progress_;
  std::map<std::string, const IndividualSeries*> series_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const WindowSplits>> windows_;
  std::map<NullKey, NullResult> null_results_;
  std::set<std::string> wanted_models_;
  std::map<std::string, LinkedModel> models_;

  void log(const std::string& msg) {
    if (!progress_) return;
    std::lock_guard lock(mutex_);
    progress_(msg);
  }

  static NullKey null_key(const Method& m, const CellKey& k) {
    return {null_class(m), k.individual, k.seed};
  }

  static CellKey source_key(const CellKey& k) {
    CellKey src = k;
    src.method = "proposed";
    return src;
  }

  bool persist() const { return !run_dir_.empty(); }

  const IndividualSeries& series(const std::string& id) const {
    auto it = series_.find(id);
    if (it == series_.end()) throw DataError("unknown individual '" + id + "'");
    return *it->second;
  }

  transform::WindowOptions window_options(bool sum_total) const {
    return {cfg_.input_length, cfg_.horizon, cfg_.sivs, sum_total};
  }

  model::ModelDims dims() const {
    return {cfg_.input_length, cfg_.horizon, cfg_.hidden, cfg_.layers, cfg_.bidirectional};
  }

  std::shared_ptr<const WindowSplits> windows(const std::string& id, const Corruption& c,
                                              bool sum_total, bool zeroed) {
    const std::string key = id + "|" + (zeroed ? "zero" : c.label()) + "|" +
                            (sum_total || zeroed ? "st" : "raw");
    {
      std::lock_guard lock(mutex_);
      if (auto it = windows_.find(key); it != windows_.end()) return it->second;
    }
    IndividualSeries s = series(id);
    if (zeroed) {
      s = transform::zero_sivs(s);
    } else if (!c.clean()) {
      s = datagen::corrupt(s, {c.missing, c.noise, transform::Channel::kCarbs, c.seed});
    }
    auto w = std::make_shared<const WindowSplits>(
        transform::prepare_windows(s, cfg_.scale, window_options(sum_total || zeroed), cfg_.split));
    std::lock_guard lock(mutex_);
    return windows_.emplace(key, std::move(w)).first->second;
  }

  training::TrainResult fit(const Method& m, std::uint64_t seed, const WindowSplits& w,
                            bool zeroed) {
    const auto sivs = model::sivs_for_channels(cfg_.sivs);
    LinkedModel init = model::make_model(m.architecture, dims(), sivs, seed);
    training::TrainConfig tc = cfg_.train;
    tc.seed = seed;
    // Zeroed data has no SIV windows to resample, so f∅ of the resampling
    // baselines is trained in a single phase.
    if (zeroed || m.procedure == Procedure::kStandard) {
      return training::train(init, w.train, w.validation, tc);
    }
    if (m.procedure == Procedure::kSivInitialize) {
      return training::train_siv_initialize(init, w.train, w.validation, tc);
    }
    return training::train_siv_finetune(init, w.train, w.validation, tc);
  }

  void save_artifacts(const fs::path& dir, training::TrainResult& r, std::uint64_t seed) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    Checkpoint ck = model::to_checkpoint(r.model);
    ck.metadata["config_hash"] = cfg_.config_hash.empty() ? "-" : cfg_.config_hash;
    ck.metadata["seed"] = std::to_string(seed);
    ck.metadata["version"] = kVersion;
    save_checkpoint(dir / "model.ckpt", ck);
    for (auto& l : r.logs) l.checkpoint = (dir / "model.ckpt").string();
    training::save_train_logs(dir / "train_log.jsonl", r.logs);
  }

  void run_null(const NullKey& key) {
    const fs::path dir = run_dir_ / "null" / key.dir();
    NullResult result;
    if (persist() && fs::exists(dir / "result.json")) {
      try {
        std::ifstream in(dir / "result.json");
        json j;
        in >> j;
        if (j.at("status") == "ok" && j.at("config_hash") == cfg_.config_hash) {
          result = {true, get_num(j, "rmse"), get_num(j, "mae")};
          std::lock_guard lock(mutex_);
          null_results_[key] = result;
          return;
        }
      } catch (const std::exception&) {
        // Unreadable: recompute.
      }
    }
    json record{{"class", key.cls},         {"individual", key.individual},
                {"seed", key.seed},         {"config_hash", cfg_.config_hash},
                {"version", kVersion}};
    try {
      const auto start = std::chrono::steady_clock::now();
      auto w = windows(key.individual, {}, true, true);
      const Method m = method_by_name(key.cls);
      auto r = fit(m, key.seed, *w, true);
      auto e = evaluate(r.model, w->test, cfg_.scale, cfg_.bootstrap_samples,
                        derive_seed(key.seed, {fnv1a64("null"), fnv1a64(key.individual)}));
      result = {true, e.errors.rmse, e.errors.mae};
      record["status"] = "ok";
      record["rmse"] = num(e.errors.rmse);
      record["mae"] = num(e.errors.mae);
      record["epochs"] = r.logs.back().epochs.size();
      if (persist()) save_artifacts(dir, r, key.seed);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      char buf[160];
      std::snprintf(buf, sizeof buf, "null %s: rmse %.3f (%zu epochs, %.1fs)",
                    key.dir().string().c_str(), e.errors.rmse, r.logs.back().epochs.size(), secs);
      log(buf);
    } catch (const std::exception& ex) {
      record["status"] = "failed";
      record["error"] = ex.what();
      record["rmse"] = nullptr;
      record["mae"] = nullptr;
      log("null " + key.dir().string() + " failed: " + ex.what());
    }
    if (persist()) write_json_atomically(dir / "result.json", record);
    std::lock_guard lock(mutex_);
    null_results_[key] = result;
  }

  CellResult run_cell(const CellKey& key) {
    const fs::path dir = run_dir_ / "cells" / key.dir();
    const Method m = method_by_name(key.method);
    const bool keep_model = wanted_models_.count(key.dir().string()) > 0;
    if (persist() && fs::exists(dir / "result.json")) {
      try {
        CellResult done = load_cell(dir / "result.json");
        if (done.ok() && done.config_hash == cfg_.config_hash) {
          if (keep_model) {
            auto model = model::from_checkpoint(load_checkpoint(dir / "model.ckpt"));
            std::lock_guard lock(mutex_);
            models_.emplace(key.dir().string(), std::move(model));
          }
          return done;
        }
      } catch (const std::exception&) {
        // Unreadable or incomplete: recompute.
      }
    }

    CellResult c;
    c.key = key;
    c.config_hash = cfg_.config_hash;
    c.version = kVersion;
    try {
      const auto start = std::chrono::steady_clock::now();
      auto w = windows(key.individual, key.corruption, m.sum_total, false);
      const std::uint64_t boot_seed = derive_seed(
          key.seed, {fnv1a64(key.method), fnv1a64(key.individual), fnv1a64(key.corruption.label())});
      if (m.sign_flip) {
        const CellKey src = source_key(key);
        LinkedModel trained = source_model(src);
        LinkedModel flipped = model::flip_restriction_sign(trained);
        auto e = evaluate(flipped, w->test, cfg_.scale, cfg_.bootstrap_samples, boot_seed);
        fill(c, e);
        if (persist()) {
          std::error_code ec;
          fs::create_directories(dir, ec);
          save_checkpoint(dir / "model.ckpt", model::to_checkpoint(flipped));
        }
      } else {
        auto r = fit(m, key.seed, *w, false);
        auto e = evaluate(r.model, w->test, cfg_.scale, cfg_.bootstrap_samples, boot_seed);
        fill(c, e);
        for (const auto& l : r.logs) c.epochs += l.epochs.size();
        c.updates = 0;
        for (const auto& l : r.logs) c.updates += l.updates();
        NullResult null;
        {
          std::lock_guard lock(mutex_);
          null = null_results_.at(null_key(m, key));
        }
        if (null.ok) {
          c.null_rmse = null.rmse;
          c.null_mae = null.mae;
          c.usage_rmse = null.rmse - c.rmse;
          c.usage_mae = null.mae - c.mae;
        }
        if (persist()) save_artifacts(dir, r, key.seed);
        if (keep_model) {
          std::lock_guard lock(mutex_);
          models_.emplace(key.dir().string(), r.model);
        }
      }
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      char buf[200];
      std::snprintf(buf, sizeof buf, "cell %s: rmse %.3f usage %.3f (%zu epochs, %.1fs)",
                    key.dir().string().c_str(), c.rmse, c.usage_rmse, c.epochs, secs);
      log(buf);
    } catch (const std::exception& ex) {
      c.status = "failed";
      c.error = ex.what();
      log("cell " + key.dir().string() + " failed: " + ex.what());
    }
    if (persist()) save_cell(dir / "result.json", c);
    return c;
  }

  LinkedModel source_model(const CellKey& src) {
    {
      std::lock_guard lock(mutex_);
      if (auto it = models_.find(src.dir().string()); it != models_.end()) return it->second;
    }
    const fs::path ckpt = run_dir_ / "cells" / src.dir() / "model.ckpt";
    if (persist() && fs::exists(ckpt)) return model::from_checkpoint(load_checkpoint(ckpt));
    throw DataError("sign flip needs the trained proposed cell " + src.dir().string());
  }

  static void fill(CellResult& c, const Evaluation& e) {
    c.n_windows = e.n_windows;
    c.rmse = e.errors.rmse;
    c.mae = e.errors.mae;
    c.rmse_ci = e.rmse_ci;
    c.mae_ci = e.mae_ci;
    c.clarke = e.clarke;
  }
};

}  // namespace

std::vector<CellResult> run_experiment(Preset preset, const std::vector<IndividualSeries>& data,
                                       const SuiteConfig& cfg, const fs::path& run_dir,
                                       const ProgressCallback& progress) {
  if (data.empty()) throw DataError("experiment: no individuals");
  auto cells = plan_cells(preset, data, cfg);
  Runner runner(data, cfg, run_dir, progress);
  return runner.run(cells);
}

// Reports --------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

// Mean of the finite entries; NaN when there are none.
double finite_mean(const std::vector<double>& v) {
  std::vector<double> f;
  for (double x : v) {
    if (std::isfinite(x)) f.push_back(x);
  }
  return mean_of(f);
}

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<CellResult>& cells) {
  out << "method,individual,missing_fraction,noise_magnitude,corruption_seed,seed,status,"
         "n_windows,rmse,rmse_lo,rmse_hi,mae,mae_lo,mae_hi,null_rmse,null_mae,usage_rmse,"
         "usage_mae,clarke_a,clarke_b,clarke_c,clarke_d,clarke_e,epochs,updates,config_hash,"
         "version\n";
  for (const auto& c : cells) {
    out << c.key.method << ',' << c.key.individual << ',' << fmt(c.key.corruption.missing) << ','
        << fmt(c.key.corruption.noise) << ',' << c.key.corruption.seed << ',' << c.key.seed << ','
        << c.status << ',' << c.n_windows << ',' << fmt(c.rmse) << ',' << fmt(c.rmse_ci.lo) << ','
        << fmt(c.rmse_ci.hi) << ',' << fmt(c.mae) << ',' << fmt(c.mae_ci.lo) << ','
        << fmt(c.mae_ci.hi) << ',' << fmt(c.null_rmse) << ',' << fmt(c.null_mae) << ','
        << fmt(c.usage_rmse) << ',' << fmt(c.usage_mae);
    for (double z : c.clarke) out << ',' << fmt(z);
    out << ',' << c.epochs << ',' << c.updates << ',' << c.config_hash << ',' << c.version << '\n';
  }
}

std::vector<MethodSummary> summarize(const std::vector<CellResult>& cells) {
  std::map<std::tuple<std::string, double, double>, std::vector<const CellResult*>> groups;
  for (const auto& c : cells) {
    if (c.ok()) groups[{c.key.method, c.key.corruption.missing, c.key.corruption.noise}].push_back(&c);
  }
  std::vector<MethodSummary> out;
  for (const auto& [key, group] : groups) {
    MethodSummary s;
    std::tie(s.method, s.missing, s.noise) = key;
    s.cells = group.size();
    std::vector<double> rmse, mae, rlo, rhi, mlo, mhi, ur, um;
    for (const auto* c : group) {
      rmse.push_back(c->rmse);
      mae.push_back(c->mae);
      rlo.push_back(c->rmse_ci.lo);
      rhi.push_back(c->rmse_ci.hi);
      mlo.push_back(c->mae_ci.lo);
      mhi.push_back(c->mae_ci.hi);
      ur.push_back(c->usage_rmse);
      um.push_back(c->usage_mae);
    }
    s.rmse = mean_of(rmse);
    s.mae = mean_of(mae);
    s.rmse_ci = {mean_of(rlo), mean_of(rhi)};
    s.mae_ci = {mean_of(mlo), mean_of(mhi)};
    s.usage_rmse = finite_mean(ur);
    s.usage_mae = finite_mean(um);
    out.push_back(s);
  }
  return out;
}

std::string summary_text(const std::vector<CellResult>& cells, const std::string& baseline,
                         const std::string& proposed) {
  std::ostringstream os;
  char buf[256];
  std::size_t failed = 0;
  std::string version, hash;
  for (const auto& c : cells) {
    failed += !c.ok();
    if (version.empty()) version = c.version;
    if (hash.empty()) hash = c.config_hash;
  }
  os << "cells: " << cells.size() << " (" << failed << " failed)\n";
  os << "config hash: " << (hash.empty() ? "-" : hash) << ", version: "
     << (version.empty() ? "-" : version) << "\n\n";

  std::snprintf(buf, sizeof buf, "%-20s %7s %7s %5s  %-22s %-22s %10s %10s\n", "method", "missing",
                "noise", "cells", "rmse [95% CI]", "mae [95% CI]", "usage_rmse", "usage_mae");
  os << buf;
  for (const auto& s : summarize(cells)) {
    char rm[64], ma[64];
    std::snprintf(rm, sizeof rm, "%.3f [%.2f,%.2f]", s.rmse, s.rmse_ci.lo, s.rmse_ci.hi);
    std::snprintf(ma, sizeof ma, "%.3f [%.2f,%.2f]", s.mae, s.mae_ci.lo, s.mae_ci.hi);
    std::snprintf(buf, sizeof buf, "%-20s %7.2f %7.2f %5zu  %-22s %-22s %10.3f %10.3f\n",
                  s.method.c_str(), s.missing, s.noise, s.cells, rm, ma, s.usage_rmse,
                  s.usage_mae);
    os << buf;
  }

  // Individual-level comparison on clean data, averaged over seeds.
  std::map<std::string, std::vector<double>> base_rmse, prop_rmse, base_usage;
  for (const auto& c : cells) {
    if (!c.ok() || !c.key.corruption.clean()) continue;
    if (c.key.method == baseline) {
      base_rmse[c.key.individual].push_back(c.rmse);
      base_usage[c.key.individual].push_back(c.usage_rmse);
    } else if (c.key.method == proposed) {
      prop_rmse[c.key.individual].push_back(c.rmse);
    }
  }
  std::vector<double> xb, xp, ub, improvement;
  for (const auto& [id, v] : base_rmse) {
    auto it = prop_rmse.find(id);
    if (it == prop_rmse.end()) continue;
    xb.push_back(mean_of(v));
    xp.push_back(mean_of(it->second));
    ub.push_back(finite_mean(base_usage[id]));
    improvement.push_back(xb.back() - xp.back());
  }
  if (!xb.empty()) {
    os << "\n" << proposed << " vs " << baseline << " (clean data, " << xb.size()
       << " individuals, seed-averaged rmse)\n";
    try {
      auto t = metrics::paired_t_test(xp, xb);
      std::snprintf(buf, sizeof buf, "  paired t-test: mean difference %.4f, t=%.4f, p=%.4g\n",
                    t.mean_difference, t.t, t.p);
      os << buf;
    } catch (const Error& e) {
      os << "  paired t-test: n/a (" << e.what() << ")\n";
    }
    auto corr = [&](const char* label, const std::vector<double>& xs) {
      try {
        auto r = metrics::pearson(xs, improvement);
        std::snprintf(buf, sizeof buf, "  pearson %s vs improvement: r=%.4f, p=%.4g\n", label,
                      r.r, r.p);
        os << buf;
      } catch (const Error& e) {
        os << "  pearson " << label << " vs improvement: n/a (" << e.what() << ")\n";
      }
    };
    corr("baseline usage", ub);
    corr("baseline rmse", xb);
  }

  // Advantage of the proposed model by corruption level.
  std::map<std::pair<double, double>, std::vector<double>> adv;
  std::map<std::tuple<std::string, double, double, std::uint64_t, std::uint64_t>, double> base;
  for (const auto& c : cells) {
    if (c.ok() && c.key.method == baseline) {
      base[{c.key.individual, c.key.corruption.missing, c.key.corruption.noise,
            c.key.corruption.seed, c.key.seed}] = c.rmse;
    }
  }
  for (const auto& c : cells) {
    if (!c.ok() || c.key.method != proposed) continue;
    auto it = base.find({c.key.individual, c.key.corruption.missing, c.key.corruption.noise,
                         c.key.corruption.seed, c.key.seed});
    if (it != base.end()) {
      adv[{c.key.corruption.missing, c.key.corruption.noise}].push_back(it->second - c.rmse);
    }
  }
  if (adv.size() > 1) {
    os << "\n" << baseline << " rmse minus " << proposed << " rmse by corruption level\n";
    for (const auto& [lvl, v] : adv) {
      std::snprintf(buf, sizeof buf, "  missing %.2f noise %.2f: %.4f (%zu pairs)\n", lvl.first,
                    lvl.second, mean_of(v), v.size());
      os << buf;
    }
  }
  return os.str();
}

}  // namespace sivcast::experiment
