// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 only when
// every selected criterion passes.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "config.hpp"
#include "fixtures.hpp"
#include "sivcast/datagen.hpp"
#include "sivcast/experiment.hpp"
#include "sivcast/grad_check.hpp"
#include "sivcast/metrics.hpp"
#include "sivcast/model.hpp"

namespace fs = std::filesystem;
namespace ad = sivcast::ad;
namespace app = sivcast::app;
namespace dg = sivcast::datagen;
namespace ex = sivcast::experiment;
namespace model = sivcast::model;
namespace mt = sivcast::metrics;
using model::Architecture;
using sivcast::transform::Channel;

namespace {

// Tolerances and thresholds.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradEps = 1e-4;
constexpr double kGradBudgetSeconds = 60;
constexpr int kInvariantTrials = 1000;
constexpr double kMainBudgetSeconds = 30 * 60;
constexpr std::size_t kSeedsRequired = 2;
constexpr double kSignFlipIncrease = 0.25;
constexpr double kEquilibriumTolerance = 1e-9;
constexpr double kMetricTolerance = 1e-12;
constexpr double kClarkeSumTolerance = 1e-9;

// Toy suite shared by the trained criteria.
constexpr std::size_t kToyIndividuals = 5;
constexpr std::size_t kToyLength = 1200;
constexpr std::size_t kSweepIndividuals = 3;
constexpr std::size_t kCorruptionSeeds = 5;
constexpr double kSweepMissing = 0.5;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const std::vector<Architecture> kArchitectures{
    Architecture::kProposed,      Architecture::kEncDec,     Architecture::kFullCapacity,
    Architecture::kNoGating,      Architecture::kNoRestriction, Architecture::kNoSivInput,
    Architecture::kOnlySivInput};

std::vector<model::SivSpec> two_sivs() { return {{"carbs", 1, 1}, {"bolus", 2, -1}}; }

// 1 ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  const model::ModelDims dims{6, 3, 8, 1, true};
  std::mt19937_64 rng(31);
  auto w = sivcast::testing::random_windows(4, dims.input_length, dims.horizon, 2, 0.25, rng);
  w.inputs[(0 * 6 + 2) * 3 + 1] = 0.3;  // engage both SIV decoders
  w.inputs[(1 * 6 + 4) * 3 + 2] = 0.2;
  const auto batch = model::make_batch(w, two_sivs());
  double worst = 0.0;
  std::string worst_arch;
  for (auto a : kArchitectures) {
    auto m = model::make_model(a, dims, two_sivs(), 17);
    auto params = m.parameter_arrays();
    sivcast::testing::randomize_parameters(params, 23);
    auto report = ad::grad_check(
        [&](ad::Tape& tape) {
          return ad::mse(tape, model::forward(tape, m, batch).predictions, batch.labels);
        },
        params, kGradEps, kGradTolerance);
    if (report.max_rel_error >= worst) {
      worst = report.max_rel_error;
      worst_arch = model::architecture_name(a);
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= kGradTolerance && secs < kGradBudgetSeconds,
          fmt("7 architectures, max rel error %.2e (%s), %.1fs", worst, worst_arch.c_str(), secs)};
}

// 2 ---------------------------------------------------------------------------

Outcome gating_invariant() {
  const model::ModelDims dims{6, 3, 8, 2, true};
  std::mt19937_64 rng(2024);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < kInvariantTrials; ++trial) {
    auto w = sivcast::testing::random_windows(5, dims.input_length, dims.horizon, 2, 0.0, rng);
    auto m = model::make_model(Architecture::kProposed, dims, two_sivs(), trial + 1);
    auto params = m.parameter_arrays();
    sivcast::testing::randomize_parameters(params, rng());
    const auto batch = model::make_batch(w, two_sivs());
    ad::Tape t1(false), t2(false);
    const auto linked = model::forward_linked(t1, m, batch).predictions;
    const auto theta_only = model::forward_baseline(t2, m, batch);
    if (!std::equal(linked.values().begin(), linked.values().end(),
                    theta_only.values().begin())) {
      ++mismatches;
    }
  }
  return {mismatches == 0,
          fmt("%d parameterizations, %zu not bit-identical", kInvariantTrials, mismatches)};
}

// 3 ---------------------------------------------------------------------------

Outcome sign_restriction() {
  const model::ModelDims dims{6, 3, 8, 1, true};
  std::mt19937_64 rng(77);
  std::bernoulli_distribution coin(0.5);
  std::size_t violations = 0, checked = 0, nonzero = 0;
  for (int trial = 0; trial < kInvariantTrials; ++trial) {
    std::vector<model::SivSpec> sivs{{"carbs", 1, coin(rng) ? 1 : -1},
                                     {"bolus", 2, coin(rng) ? 1 : -1}};
    auto w = sivcast::testing::random_windows(4, dims.input_length, dims.horizon, 2, 0.3, rng);
    auto m = model::make_model(Architecture::kProposed, dims, sivs, trial + 1);
    auto params = m.parameter_arrays();
    sivcast::testing::randomize_parameters(params, rng());
    ad::Tape tape(false);
    const auto trace = model::forward(tape, m, model::make_batch(w, sivs));
    for (const auto& step : trace.contributions) {
      for (std::size_t s = 0; s < sivs.size(); ++s) {
        for (double v : step[s].values()) {
          ++checked;
          nonzero += v != 0.0;
          violations += v * sivs[s].sign < 0.0;
        }
      }
    }
  }
  return {violations == 0 && nonzero > 0,
          fmt("%d instances, %zu components (%zu nonzero), %zu with the wrong sign",
              kInvariantTrials, checked, nonzero, violations)};
}

// Toy suite -------------------------------------------------------------------

struct ToySuite {
  std::vector<sivcast::transform::IndividualSeries> data;
  ex::SuiteConfig suite;
  fs::path run_dir;
  bool verbose = false;

  std::vector<ex::CellResult> run(ex::Preset preset, std::vector<std::string> methods,
                                  const ex::SuiteConfig* override_cfg = nullptr,
                                  const std::vector<sivcast::transform::IndividualSeries>* subset =
                                      nullptr) const {
    ex::SuiteConfig cfg = override_cfg ? *override_cfg : suite;
    cfg.methods = std::move(methods);
    return ex::run_experiment(preset, subset ? *subset : data, cfg, run_dir,
                              [&](const std::string& m) {
                                if (verbose) std::cerr << "  " << m << '\n';
                              });
  }
};

ToySuite make_toy_suite(const fs::path& work, bool verbose) {
  app::RunConfig cfg;
  cfg.data.generator = dg::Generator::kToy;
  cfg.data.individuals = kToyIndividuals;
  cfg.data.toy.length = kToyLength;
  cfg.suite.bootstrap_samples = 1000;
  app::resolve(cfg);
  ToySuite t;
  for (auto& g : dg::generate_dataset(cfg.data)) t.data.push_back(std::move(g.series));
  t.suite = cfg.suite;
  t.run_dir = work / "toy";
  t.verbose = verbose;
  return t;
}

std::size_t failed(const std::vector<ex::CellResult>& cells) {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const auto& c) { return !c.ok(); }));
}

// Mean over individuals of a cell field, per (method, seed).
std::map<std::pair<std::string, std::uint64_t>, double> seed_means(
    const std::vector<ex::CellResult>& cells, double ex::CellResult::*field) {
  std::map<std::pair<std::string, std::uint64_t>, std::pair<double, std::size_t>> acc;
  for (const auto& c : cells) {
    if (!c.ok() || !c.key.corruption.clean()) continue;
    auto& a = acc[{c.key.method, c.key.seed}];
    a.first += c.*field;
    ++a.second;
  }
  std::map<std::pair<std::string, std::uint64_t>, double> out;
  for (const auto& [k, v] : acc) out[k] = v.first / v.second;
  return out;
}

// 4 ---------------------------------------------------------------------------

Outcome main_ordering(const ToySuite& toy) {
  const auto t0 = Clock::now();
  const auto cells = toy.run(ex::Preset::kMainTable, {"enc_dec", "proposed"});
  const double secs = seconds_since(t0);
  const auto rmse = seed_means(cells, &ex::CellResult::rmse);
  const auto usage = seed_means(cells, &ex::CellResult::usage_rmse);
  std::size_t wins = 0;
  std::string per_seed;
  for (auto seed : toy.suite.seeds) {
    const double rp = rmse.at({"proposed", seed}), re = rmse.at({"enc_dec", seed});
    const double up = usage.at({"proposed", seed}), ue = usage.at({"enc_dec", seed});
    const bool win = rp < re && up > ue;
    wins += win;
    per_seed += fmt(" s%llu: rmse %.2f vs %.2f, usage %.2f vs %.2f%s;",
                    static_cast<unsigned long long>(seed), rp, re, up, ue, win ? "" : " (lost)");
  }
  return {wins >= kSeedsRequired && failed(cells) == 0 && secs < kMainBudgetSeconds,
          fmt("proposed ahead in %zu/%zu seeds, %zu failed cells, %.0fs;", wins,
              toy.suite.seeds.size(), failed(cells), secs) +
              per_seed};
}

// 5 ---------------------------------------------------------------------------

Outcome carry_forward(const ToySuite& toy) {
  const auto cells = toy.run(ex::Preset::kCarryForward, {"proposed", "proposed_raw"});
  const auto rmse = seed_means(cells, &ex::CellResult::rmse);
  std::size_t wins = 0;
  std::string per_seed;
  for (auto seed : toy.suite.seeds) {
    const double st = rmse.at({"proposed", seed}), raw = rmse.at({"proposed_raw", seed});
    wins += st < raw;
    per_seed += fmt(" s%llu: %.2f vs %.2f;", static_cast<unsigned long long>(seed), st, raw);
  }
  return {wins >= kSeedsRequired && failed(cells) == 0,
          fmt("sum-total ahead of raw input in %zu/%zu seeds;", wins, toy.suite.seeds.size()) +
              per_seed};
}

// 6 ---------------------------------------------------------------------------

Outcome sign_flip(const ToySuite& toy) {
  const auto cells = toy.run(ex::Preset::kSignFlip, {"proposed", "proposed_sign_flip"});
  const auto rmse = seed_means(cells, &ex::CellResult::rmse);
  double base = 0, flipped = 0;
  for (auto seed : toy.suite.seeds) {
    base += rmse.at({"proposed", seed});
    flipped += rmse.at({"proposed_sign_flip", seed});
  }
  const double increase = flipped / base - 1.0;
  return {increase >= kSignFlipIncrease && failed(cells) == 0,
          fmt("mean rmse %.2f -> %.2f with k negated (+%.0f%%)", base / toy.suite.seeds.size(),
              flipped / toy.suite.seeds.size(), 100 * increase)};
}

// 7 ---------------------------------------------------------------------------

Outcome noise_sweep(const ToySuite& toy) {
  ex::SuiteConfig cfg = toy.suite;
  cfg.seeds = {toy.suite.seeds.front()};
  cfg.missing_levels = {0.0, kSweepMissing};
  cfg.noise_levels = {0.0};
  cfg.corruption_seeds = kCorruptionSeeds;
  const std::vector<sivcast::transform::IndividualSeries> subset(
      toy.data.begin(), toy.data.begin() + kSweepIndividuals);
  const auto cells = toy.run(ex::Preset::kNoiseSweep, {"enc_dec", "proposed"}, &cfg, &subset);

  // Advantage = baseline rmse - proposed rmse, per individual and corruption.
  std::map<std::pair<std::string, std::string>, std::map<std::string, double>> by_key;
  for (const auto& c : cells) {
    if (c.ok()) by_key[{c.key.individual, c.key.corruption.label()}][c.key.method] = c.rmse;
  }
  double clean = 0, missing = 0;
  std::size_t n_clean = 0, n_missing = 0;
  for (const auto& [key, methods] : by_key) {
    if (!methods.contains("enc_dec") || !methods.contains("proposed")) continue;
    const double adv = methods.at("enc_dec") - methods.at("proposed");
    if (key.second == "clean") {
      clean += adv;
      ++n_clean;
    } else {
      missing += adv;
      ++n_missing;
    }
  }
  clean /= n_clean;
  missing /= n_missing;
  return {missing < clean && failed(cells) == 0,
          fmt("advantage %.2f at missing 0.0 vs %.2f at missing %.1f (%zu individuals, %zu "
              "corruption seeds)",
              clean, missing, kSweepMissing, n_clean, kCorruptionSeeds)};
}

// 8 ---------------------------------------------------------------------------

Outcome physio_ground_truth() {
  std::mt19937_64 rng(8);
  double worst_drift = 0.0;
  std::size_t meal_ok = 0, bolus_ok = 0;
  const std::size_t trials = 20;
  for (std::size_t k = 0; k < trials; ++k) {
    dg::PhysioConfig c;
    c.days = 1;
    c.noise_sd = 0.0;
    c.params = dg::sample_physio_params(rng);
    for (double g : dg::simulate_physio(c, dg::EventSchedule{}).glucose) {
      worst_drift = std::max(worst_drift, std::abs(g - c.params.gb));
    }
    dg::EventSchedule meal, bolus;
    meal.meals.push_back({120.0, 60.0});
    bolus.boluses.push_back({120.0, 4.0});
    const auto up = dg::simulate_physio(c, meal).glucose;
    const auto down = dg::simulate_physio(c, bolus).glucose;
    meal_ok += *std::max_element(up.begin(), up.end()) > c.params.gb;
    bolus_ok += *std::min_element(down.begin(), down.end()) < c.params.gb;
  }
  return {worst_drift <= kEquilibriumTolerance && meal_ok == trials && bolus_ok == trials,
          fmt("%zu parameter draws: max |G-Gb| %.1e without events, meal raises %zu/%zu, bolus "
              "lowers %zu/%zu",
              trials, worst_drift, meal_ok, trials, bolus_ok, trials)};
}

// 9 ---------------------------------------------------------------------------

Outcome metric_units() {
  const std::vector<double> preds{103, 96}, labels{100, 100};
  const auto e = mt::final_point_errors(preds, labels, 1);
  const bool errors_ok = std::abs(e.rmse - std::sqrt(12.5)) <= kMetricTolerance &&
                         std::abs(e.mae - 3.5) <= kMetricTolerance;
  const bool zones_ok = mt::clarke_zone(100, 100) == mt::ClarkeZone::kA &&
                        mt::clarke_zone(250, 120) == mt::ClarkeZone::kD &&
                        mt::clarke_zone(50, 200) == mt::ClarkeZone::kE;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> d(1, 500);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(257), y(257);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = d(rng);
      y[i] = d(rng);
    }
    double total = 0;
    for (double v : mt::clarke_grid(p, y)) total += v;
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return {errors_ok && zones_ok && worst <= kClarkeSumTolerance,
          fmt("rmse %.15g mae %.15g, zones %s, max |sum-1| %.1e", e.rmse, e.mae,
              zones_ok ? "A/D/E" : "wrong", worst)};
}

// 10 --------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return out;
}

Outcome determinism(const fs::path& work) {
  const fs::path dir = work / "determinism";
  const fs::path run = dir / "run";
  fs::create_directories(dir);
  std::ofstream(dir / "run.ini") << "[data]\nindividuals = 2\ntoy_length = 600\n"
                                    "[model]\nhidden = 8\n"
                                    "[train]\nmin_epochs = 3\nmax_epochs = 5\n"
                                    "[experiment]\nbootstrap_samples = 200\n";
  app::CommandOptions opts;
  opts.config = dir / "run.ini";
  opts.out = run;
  opts.seed = 7;
  std::ostringstream log;
  std::vector<std::map<std::string, std::string>> runs;
  for (int k = 0; k < 2; ++k) {
    fs::remove_all(run);
    app::cmd_simulate(opts, log);
    app::cmd_train(opts, log);
    app::cmd_evaluate(opts, log);
    runs.push_back(snapshot(run));
  }
  std::size_t differing = 0;
  for (const auto& [name, bytes] : runs[0]) {
    auto it = runs[1].find(name);
    differing += it == runs[1].end() || it->second != bytes;
  }
  differing += runs[1].size() - std::min(runs[1].size(), runs[0].size());
  return {differing == 0 && runs[0].size() > 0,
          fmt("%zu files compared, %zu differ", runs[0].size(), differing)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Acceptance criteria runner"};
  fs::path work = fs::temp_directory_path() / "sivcast_acceptance";
  std::vector<int> only;
  bool resume = false, verbose = false;
  cli.add_option("-w,--work-dir", work, "Scratch directory for runs");
  cli.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  cli.add_flag("--resume", resume, "Reuse completed cells from a previous run");
  cli.add_flag("-v,--verbose", verbose, "Print per-cell progress");
  CLI11_PARSE(cli, argc, argv);

  if (!resume) fs::remove_all(work);
  fs::create_directories(work);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int id) { return selected.empty() || selected.contains(id); };

  std::optional<ToySuite> toy;
  auto toy_suite = [&]() -> const ToySuite& {
    if (!toy) toy = make_toy_suite(work, verbose);
    return *toy;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"gating invariant", gating_invariant},
      {"sign restriction", sign_restriction},
      {"main ordering", [&] { return main_ordering(toy_suite()); }},
      {"carry-forward ablation", [&] { return carry_forward(toy_suite()); }},
      {"sign-flip degradation", [&] { return sign_flip(toy_suite()); }},
      {"noise sweep shape", [&] { return noise_sweep(toy_suite()); }},
      {"physio ground truth", physio_ground_truth},
      {"metric units", metric_units},
      {"determinism", [&] { return determinism(work); }},
  };

  std::size_t failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!wanted(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << id << "] " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
