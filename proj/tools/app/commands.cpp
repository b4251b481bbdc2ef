#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include "sivcast/checkpoint.hpp"
#include "sivcast/error.hpp"
#include "sivcast/seed.hpp"
#include "sivcast/training.hpp"
#include "sivcast/version.hpp"

namespace sivcast::app {

namespace fs = std::filesystem;
using experiment::CellResult;
using transform::IndividualSeries;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_dir(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// Every command leaves the effective config next to its outputs.
void record_config(const fs::path& out, const RunConfig& cfg) {
  write_text(out / "run_config.ini", "# config_hash " + cfg.suite.config_hash + ", version " +
                                         kVersion + "\n" + canonical_text(cfg));
}

fs::path data_dir(const CommandOptions& opts) {
  return opts.data.empty() ? opts.out / "data" : opts.data;
}

fs::path model_dir(const fs::path& out, const std::string& method, const std::string& id,
                   std::uint64_t seed) {
  return out / "train" / method / id / ("s" + std::to_string(seed));
}

fs::path null_dir(const fs::path& out, const std::string& cls, const std::string& id,
                  std::uint64_t seed) {
  return out / "train" / "null" / cls / id / ("s" + std::to_string(seed));
}

fs::path experiment_dir(const fs::path& out, experiment::Preset p) {
  return out / "experiments" / experiment::preset_name(p);
}

std::uint64_t parse_seed(const std::string& text, const char* source) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(source) + ": expected a nonnegative integer seed, got '" + text +
                    "'");
}

// Stores each phase's log as epochs complete, so a divergence leaves the
// epochs that did finish on disk.
struct PartialLogs {
  std::vector<training::TrainLog> logs;

  training::EpochCallback callback() {
    return [this](const training::TrainLog& log, const training::EpochRecord&) {
      if (logs.empty() || logs.back().phase != log.phase || log.epochs.size() == 1) {
        logs.push_back(log);
      } else {
        logs.back() = log;
      }
    };
  }
};

training::TrainResult fit(const experiment::Method& m, const experiment::SuiteConfig& suite,
                          const transform::WindowSplits& w, bool zeroed,
                          const training::EpochCallback& cb) {
  const model::ModelDims dims{suite.input_length, suite.horizon, suite.hidden, suite.layers,
                              suite.bidirectional};
  const auto init = model::make_model(m.architecture, dims, model::sivs_for_channels(suite.sivs),
                                      suite.train.seed);
  using experiment::Procedure;
  if (zeroed || m.procedure == Procedure::kStandard) {
    return training::train(init, w.train, w.validation, suite.train, cb);
  }
  if (m.procedure == Procedure::kSivInitialize) {
    return training::train_siv_initialize(init, w.train, w.validation, suite.train, cb);
  }
  return training::train_siv_finetune(init, w.train, w.validation, suite.train, cb);
}

void train_one(const experiment::Method& m, const RunConfig& cfg, const transform::WindowSplits& w,
               bool zeroed, const fs::path& dir, std::ostream& log) {
  ensure_dir(dir);
  const fs::path log_path = dir / "train_log.jsonl";
  const std::map<std::string, std::string> meta{{"config_hash", cfg.suite.config_hash},
                                                {"seed", std::to_string(cfg.suite.train.seed)},
                                                {"version", kVersion}};
  PartialLogs partial;
  training::TrainResult r;
  try {
    r = fit(m, cfg.suite, w, zeroed, partial.callback());
  } catch (const DivergenceError& e) {
    for (auto& l : partial.logs) l.metadata = meta;
    training::save_train_logs(log_path, partial.logs);
    throw NumericalError(std::string(e.what()) + " (train log: " + log_path.string() + ")");
  }
  Checkpoint ck = model::to_checkpoint(r.model);
  for (const auto& [k, v] : meta) ck.metadata[k] = v;
  save_checkpoint(dir / "model.ckpt", ck);
  for (auto& l : r.logs) {
    l.checkpoint = (dir / "model.ckpt").string();
    l.metadata = meta;
  }
  training::save_train_logs(log_path, r.logs);
  std::size_t epochs = 0;
  for (const auto& l : r.logs) epochs += l.epochs.size();
  log << "trained " << dir.string() << " (" << epochs << " epochs, best val loss "
      << r.logs.back().best_val_loss << ")\n";
}

}  // namespace

RunConfig effective_config(const CommandOptions& opts) {
  RunConfig cfg = opts.config.empty() ? RunConfig{} : load_config(opts.config);
  if (const char* env = std::getenv("SIV_SEED"); env && *env) {
    override_seed(cfg, parse_seed(env, "SIV_SEED"));
  }
  if (opts.seed) override_seed(cfg, *opts.seed);
  if (opts.preset) cfg.preset = experiment::parse_preset(*opts.preset);
  resolve(cfg);
  return cfg;
}

std::vector<IndividualSeries> load_data_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("data directory " + dir.string() + " does not exist");
  if (fs::exists(dir / "manifest.json")) return datagen::load_dataset(dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no CSV files in " + dir.string());
  std::vector<IndividualSeries> out;
  for (const auto& f : files) out.push_back(transform::load_series_csv(f));
  return out;
}

void cmd_simulate(const CommandOptions& opts, std::ostream& log) {
  const RunConfig cfg = effective_config(opts);
  record_config(opts.out, cfg);
  const auto data = datagen::generate_dataset(cfg.data);
  const fs::path dir = data_dir(opts);
  datagen::write_dataset(dir, cfg.data, data, cfg.suite.config_hash);
  log << "wrote " << data.size() << " " << datagen::generator_name(cfg.data.generator)
      << " individuals to " << dir.string() << "\n";
}

void cmd_train(const CommandOptions& opts, std::ostream& log) {
  const RunConfig cfg = effective_config(opts);
  record_config(opts.out, cfg);
  const auto method = experiment::method_by_name(cfg.method);
  const auto null_method = experiment::method_by_name(experiment::null_class(method));
  const auto seed = cfg.suite.train.seed;
  transform::WindowOptions wo{cfg.suite.input_length, cfg.suite.horizon, cfg.suite.sivs,
                              method.sum_total};
  for (const auto& s : load_data_dir(data_dir(opts))) {
    const auto w = transform::prepare_windows(s, cfg.suite.scale, wo, cfg.suite.split);
    train_one(method, cfg, w, false, model_dir(opts.out, method.name, s.id, seed), log);
    wo.sum_total = true;
    const auto z = transform::prepare_windows(transform::zero_sivs(s), cfg.suite.scale, wo,
                                              cfg.suite.split);
    wo.sum_total = method.sum_total;
    train_one(null_method, cfg, z, true, null_dir(opts.out, null_method.name, s.id, seed), log);
  }
}

std::vector<CellResult> cmd_evaluate(const CommandOptions& opts, std::ostream& log) {
  const RunConfig cfg = effective_config(opts);
  record_config(opts.out, cfg);
  const auto method = experiment::method_by_name(cfg.method);
  const auto cls = experiment::null_class(method);
  const auto seed = cfg.suite.train.seed;
  transform::WindowOptions wo{cfg.suite.input_length, cfg.suite.horizon, cfg.suite.sivs,
                              method.sum_total};
  std::vector<CellResult> rows;
  for (const auto& s : load_data_dir(data_dir(opts))) {
    const fs::path mdir = model_dir(opts.out, method.name, s.id, seed);
    const fs::path ndir = null_dir(opts.out, cls, s.id, seed);
    if (!fs::exists(mdir / "model.ckpt")) {
      throw IoError("no trained model at " + mdir.string() + "; run `train` first");
    }
    const auto m = model::from_checkpoint(load_checkpoint(mdir / "model.ckpt"));
    const auto w = transform::prepare_windows(s, cfg.suite.scale, wo, cfg.suite.split);
    CellResult c;
    c.key = {method.name, s.id, {}, seed};
    c.config_hash = cfg.suite.config_hash;
    c.version = kVersion;
    const auto boot = derive_seed(
        seed, {fnv1a64(method.name), fnv1a64(s.id), fnv1a64(c.key.corruption.label())});
    const auto e =
        experiment::evaluate(m, w.test, cfg.suite.scale, cfg.suite.bootstrap_samples, boot);
    c.n_windows = e.n_windows;
    c.rmse = e.errors.rmse;
    c.mae = e.errors.mae;
    c.rmse_ci = e.rmse_ci;
    c.mae_ci = e.mae_ci;
    c.clarke = e.clarke;
    for (const auto& l : training::load_train_logs(mdir / "train_log.jsonl")) {
      c.epochs += l.epochs.size();
      c.updates += l.updates();
    }
    if (fs::exists(ndir / "model.ckpt")) {
      const auto nm = model::from_checkpoint(load_checkpoint(ndir / "model.ckpt"));
      wo.sum_total = true;
      const auto z = transform::prepare_windows(transform::zero_sivs(s), cfg.suite.scale, wo,
                                                cfg.suite.split);
      wo.sum_total = method.sum_total;
      const auto ne = experiment::evaluate(
          nm, z.test, cfg.suite.scale, cfg.suite.bootstrap_samples,
          derive_seed(seed, {fnv1a64("null"), fnv1a64(s.id)}));
      c.null_rmse = ne.errors.rmse;
      c.null_mae = ne.errors.mae;
      c.usage_rmse = c.null_rmse - c.rmse;
      c.usage_mae = c.null_mae - c.mae;
    } else {
      log << "no f∅ model at " << ndir.string() << "; usage left empty\n";
    }
    rows.push_back(c);
  }
  const fs::path report = opts.out / "eval" / "eval_report.csv";
  ensure_dir(report.parent_path());
  std::ofstream out(report);
  if (!out) throw IoError("cannot write " + report.string());
  experiment::write_results_csv(out, rows);
  if (!out) throw IoError("write failed for " + report.string());
  log << "wrote " << report.string() << "\n";
  return rows;
}

std::size_t cmd_experiment(const CommandOptions& opts, std::ostream& log) {
  RunConfig cfg = effective_config(opts);
  cfg.suite.jobs = std::max<std::size_t>(opts.jobs, 1);
  record_config(opts.out, cfg);
  const auto data = load_data_dir(data_dir(opts));
  const fs::path run_dir = experiment_dir(opts.out, cfg.preset);
  auto cells = experiment::run_experiment(cfg.preset, data, cfg.suite, run_dir,
                                          [&](const std::string& msg) { log << msg << "\n"; });
  std::sort(cells.begin(), cells.end(), [](const CellResult& a, const CellResult& b) {
    return a.key.dir() < b.key.dir();
  });
  std::ofstream csv(run_dir / "results.csv");
  if (!csv) throw IoError("cannot write " + (run_dir / "results.csv").string());
  experiment::write_results_csv(csv, cells);
  write_text(run_dir / "summary.txt", experiment::summary_text(cells));
  const auto failed = static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const CellResult& c) { return !c.ok(); }));
  log << "wrote " << (run_dir / "results.csv").string() << " (" << cells.size() << " cells, "
      << failed << " failed)\n";
  return failed;
}

void cmd_report(const CommandOptions& opts, std::ostream& out) {
  const RunConfig cfg = effective_config(opts);
  const fs::path run_dir = experiment_dir(opts.out, cfg.preset);
  auto cells = experiment::load_cells(run_dir);
  if (cells.empty()) throw IoError("no cell results under " + run_dir.string());
  std::ofstream csv(run_dir / "results.csv");
  if (!csv) throw IoError("cannot write " + (run_dir / "results.csv").string());
  experiment::write_results_csv(csv, cells);
  const std::string summary = experiment::summary_text(cells);
  write_text(run_dir / "summary.txt", summary);
  out << summary;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"sivcast: glucose forecasting with sparse-but-informative variables"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(0, 1);
  bool show_defaults = false;
  app.add_flag("--show-defaults", show_defaults, "Print every config key with its default");

  CommandOptions opts;
  auto common = [&](CLI::App* sub, bool needs_data) {
    sub->add_option("-c,--config", opts.config, "Run config (INI)");
    sub->add_option("-o,--out", opts.out, "Run directory")->required();
    if (needs_data) sub->add_option("-d,--data", opts.data, "Dataset directory (default <out>/data)");
    sub->add_option("--seed", opts.seed, "Override every seed in the config");
  };
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
  common(simulate, false);
  simulate->add_option("-d,--data", opts.data, "Dataset directory (default <out>/data)");
  auto* train = app.add_subcommand("train", "Train [model] method and its f∅ on each individual");
  common(train, true);
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate trained models on the test split");
  common(evaluate, true);
  auto* exp = app.add_subcommand("experiment", "Run an experiment preset");
  common(exp, true);
  exp->add_option("-p,--preset", opts.preset, "Preset (overrides [experiment] preset)");
  exp->add_option("-j,--jobs", opts.jobs, "Parallel cells")->check(CLI::PositiveNumber);
  auto* report = app.add_subcommand("report", "Rebuild results.csv and summary.txt from cells");
  report->add_option("-c,--config", opts.config, "Run config (INI)");
  report->add_option("-o,--out", opts.out, "Run directory")->required();
  report->add_option("-p,--preset", opts.preset, "Preset (overrides [experiment] preset)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  try {
    if (show_defaults) {
      out << documented_defaults();
      return kExitOk;
    }
    if (*simulate) {
      cmd_simulate(opts, err);
    } else if (*train) {
      cmd_train(opts, err);
    } else if (*evaluate) {
      const auto rows = cmd_evaluate(opts, err);
      experiment::write_results_csv(out, rows);
    } else if (*exp) {
      if (cmd_experiment(opts, err) > 0) return kExitFailure;
    } else if (*report) {
      cmd_report(opts, out);
    } else {
      out << app.help();
      return kExitConfig;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const SimulationError& e) {
    err << "simulation error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace sivcast::app
