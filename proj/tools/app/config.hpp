#pragma once

// Run configuration in INI form: sections [data], [model], [train] and
// [experiment], one `key = value` per line, `#` or `;` comments.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sivcast/datagen.hpp"
#include "sivcast/experiment.hpp"

namespace sivcast::app {

struct RunConfig {
  datagen::DatasetConfig data;
  std::string method = "proposed";           // used by train and evaluate
  std::vector<transform::Channel> sivs;      // empty: carbs for toy, carbs+bolus for physio
  experiment::SuiteConfig suite;             // sivs and config_hash filled by resolve()
  experiment::Preset preset = experiment::Preset::kMainTable;
};

/// Parses config text. Errors are ConfigErrors of the form
/// "<origin>:<line>: message".
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Sets the data seed, the training seed and the experiment seed list.
void override_seed(RunConfig& cfg, std::uint64_t seed);

/// Every key with its effective value, in a fixed order. This is what the
/// config hash covers.
std::string canonical_text(const RunConfig& cfg);

/// 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// Validates all sections and fills the derived suite fields.
void resolve(RunConfig& cfg);

/// `key = default` lines with one-line descriptions, grouped by section.
std::string documented_defaults();

}  // namespace sivcast::app
