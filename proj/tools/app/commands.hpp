#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace sivcast::app {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // unexpected errors, failed experiment cells
inline constexpr int kExitConfig = 2;   // bad config, bad flags, malformed data
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumerical = 4;  // NaN abort or non-finite simulation

struct CommandOptions {
  std::filesystem::path config;  // empty: built-in defaults
  std::filesystem::path out;     // run directory
  std::filesystem::path data;    // empty: <out>/data
  std::optional<std::uint64_t> seed;
  std::optional<std::string> preset;
  std::size_t jobs = 1;
};

/// Config file, then SIV_SEED, then --seed; resolved and hashed.
RunConfig effective_config(const CommandOptions& opts);

/// Datasets written by `simulate` (manifest present) or a directory of CSVs
/// in the t,glucose,carbs,bolus schema, loaded in file-name order.
std::vector<transform::IndividualSeries> load_data_dir(const std::filesystem::path& dir);

void cmd_simulate(const CommandOptions& opts, std::ostream& log);
void cmd_train(const CommandOptions& opts, std::ostream& log);
/// Writes <out>/eval/eval_report.csv and returns its rows.
std::vector<experiment::CellResult> cmd_evaluate(const CommandOptions& opts, std::ostream& log);
/// Returns the number of failed cells.
std::size_t cmd_experiment(const CommandOptions& opts, std::ostream& log);
void cmd_report(const CommandOptions& opts, std::ostream& out);

/// Full command line front end. Errors are reported on `err` and mapped to
/// the exit codes above.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sivcast::app
