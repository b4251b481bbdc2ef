#pragma once

// Experiment grid: presets expand into cells (method × individual ×
// corruption × seed); each cell trains, evaluates and optionally persists its
// result under a run directory so interrupted suites resume where they stopped.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "sivcast/metrics.hpp"
#include "sivcast/model.hpp"
#include "sivcast/training.hpp"
#include "sivcast/transform.hpp"

namespace sivcast::experiment {

// Single-model evaluation ------------------------------------------------------

struct Evaluation {
  std::size_t n_windows = 0;
  metrics::PointErrors errors;  // mg/dL
  metrics::Interval rmse_ci;
  metrics::Interval mae_ci;
  metrics::ClarkeProportions clarke{};
};

/// Final-point metrics of `m` on `test` after unscaling to target units.
/// Predictions below 1 mg/dL are floored at 1 for the Clarke grid only.
Evaluation evaluate(const model::LinkedModel& m, const transform::WindowSet& test,
                    const transform::ScaleSpec& scale, std::size_t bootstrap_samples,
                    std::uint64_t bootstrap_seed);

// Methods and presets ----------------------------------------------------------

enum class Procedure { kStandard, kSivInitialize, kSivFinetune };

struct Method {
  std::string name;
  model::Architecture architecture = model::Architecture::kProposed;
  Procedure procedure = Procedure::kStandard;
  bool sum_total = true;
  bool sign_flip = false;  // evaluates the trained "proposed" cell with k negated
};

/// Known names: enc_dec, proposed, full_capacity, siv_initialize,
/// siv_finetune, no_gating, no_restriction, no_siv_input, only_siv_input,
/// proposed_raw, enc_dec_raw, proposed_sign_flip.
Method method_by_name(const std::string& name);
std::vector<std::string> method_names();

/// Name of the model whose zeroed-data run serves as f∅ for `method`. Methods
/// whose SIV path cannot engage on all-zero SIVs share the Enc/Dec run.
std::string null_class(const Method& method);

enum class Preset { kMainTable, kAblations, kCarryForward, kNoiseSweep, kSignFlip };

const char* preset_name(Preset p);
Preset parse_preset(const std::string& name);
std::vector<std::string> preset_methods(Preset p);

// Cells ------------------------------------------------------------------------

struct Corruption {
  double missing = 0.0;
  double noise = 0.0;
  std::uint64_t seed = 0;  // 0 for the uncorrupted data

  bool clean() const { return missing == 0.0 && noise == 0.0; }
  std::string label() const;
};

struct CellKey {
  std::string method;
  std::string individual;
  Corruption corruption;
  std::uint64_t seed = 0;

  /// Relative directory, e.g. proposed/ind00/clean/s1.
  std::filesystem::path dir() const;
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct CellResult {
  CellKey key;
  std::string status = "ok";  // or "failed"
  std::string error;
  std::size_t n_windows = 0;
  double rmse = kNaN;
  double mae = kNaN;
  metrics::Interval rmse_ci{kNaN, kNaN};
  metrics::Interval mae_ci{kNaN, kNaN};
  double null_rmse = kNaN;  // L(f∅(X∅))
  double null_mae = kNaN;
  double usage_rmse = kNaN;  // null_rmse - rmse
  double usage_mae = kNaN;
  metrics::ClarkeProportions clarke{kNaN, kNaN, kNaN, kNaN, kNaN};
  std::size_t epochs = 0;
  std::size_t updates = 0;
  std::string config_hash;
  std::string version;

  bool ok() const { return status == "ok"; }
};

struct SuiteConfig {
  std::vector<transform::Channel> sivs{transform::Channel::kCarbs, transform::Channel::kBolus};
  std::size_t input_length = 24;
  std::size_t horizon = 6;
  transform::ScaleSpec scale;
  transform::SplitFractions split;
  std::size_t hidden = 32;
  std::size_t layers = 2;
  bool bidirectional = true;
  training::TrainConfig train;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t bootstrap_samples = 1000;
  std::vector<double> missing_levels{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> noise_levels{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::size_t corruption_seeds = 5;
  std::vector<std::string> methods;  // overrides the preset's list when nonempty
  std::string config_hash;
  std::size_t jobs = 1;
};

void validate(const SuiteConfig& cfg);

/// Cells a preset expands to, in report order.
std::vector<CellKey> plan_cells(Preset preset, const std::vector<transform::IndividualSeries>& data,
                                const SuiteConfig& cfg);

using ProgressCallback = std::function<void(const std::string&)>;

/// Runs every cell of the preset. With a nonempty run_dir, cells completed
/// under the same config hash are read back instead of retrained and new ones
/// are written as they finish;
/// failures are recorded in the cell and do not stop the suite.
std::vector<CellResult> run_experiment(Preset preset,
                                       const std::vector<transform::IndividualSeries>& data,
                                       const SuiteConfig& cfg,
                                       const std::filesystem::path& run_dir = {},
                                       const ProgressCallback& progress = {});

// Persistence and reports --------------------------------------------------------

void save_cell(const std::filesystem::path& path, const CellResult& cell);
CellResult load_cell(const std::filesystem::path& path);
/// Every result.json below run_dir/cells, sorted by key.
std::vector<CellResult> load_cells(const std::filesystem::path& run_dir);

/// Fixed column set, one row per cell.
void write_results_csv(std::ostream& out, const std::vector<CellResult>& cells);

/// Per-method means over cells grouped by corruption level.
struct MethodSummary {
  std::string method;
  double missing = 0.0;
  double noise = 0.0;
  std::size_t cells = 0;
  double rmse = kNaN;
  double mae = kNaN;
  metrics::Interval rmse_ci{kNaN, kNaN};
  metrics::Interval mae_ci{kNaN, kNaN};
  double usage_rmse = kNaN;
  double usage_mae = kNaN;
};

std::vector<MethodSummary> summarize(const std::vector<CellResult>& cells);

/// Human-readable summary: per-method table, proposed-vs-baseline paired test
/// and individual-level correlations when both methods are present.
std::string summary_text(const std::vector<CellResult>& cells,
                         const std::string& baseline = "enc_dec",
                         const std::string& proposed = "proposed");

}  // namespace sivcast::experiment
