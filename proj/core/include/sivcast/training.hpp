#pragma once

// Mini-batch Adam training with early stopping, gradient-update matching
// between architectures, and the two resampling baselines.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "sivcast/model.hpp"
#include "sivcast/transform.hpp"

namespace sivcast::training {

inline constexpr std::size_t kUnlimitedPatience = std::numeric_limits<std::size_t>::max();

struct TrainConfig {
  double lr = 0.01;
  double weight_decay = 1e-7;
  std::size_t batch_size = 64;
  std::size_t min_epochs = 50;
  std::size_t patience = 10;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 1;
  bool update_matching = true;
};

void validate(const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::size_t updates = 0;  // cumulative
};

struct TrainLog {
  std::string phase = "train";
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::string checkpoint;  // path of the saved best model, when saved
  std::map<std::string, std::string> metadata;  // written with the summary line

  std::size_t updates() const { return epochs.empty() ? 0 : epochs.back().updates; }
};

struct TrainResult {
  model::LinkedModel model;
  std::vector<TrainLog> logs;  // one per phase
};

using EpochCallback = std::function<void(const TrainLog&, const EpochRecord&)>;

std::size_t batches_per_epoch(std::size_t windows, std::size_t batch_size);

/// Full-horizon MSE over every window, in scaled units.
double evaluate_loss(const model::LinkedModel& m, const transform::WindowSet& windows,
                     std::size_t batch_size = 256);

/// Trains a copy of `init`. Each epoch visits the training windows in an order
/// drawn from (seed, epoch); training stops once at least min_epochs have run
/// and validation loss has not improved for `patience` epochs, or at
/// max_epochs. The returned model holds the best-validation parameters.
/// Throws DataError on an empty set, DivergenceError on a non-finite loss or
/// gradient.
TrainResult train(const model::LinkedModel& init, const transform::WindowSet& train_set,
                  const transform::WindowSet& validation, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Scales min_epochs (and max_epochs) of a run with `batches` batches per
/// epoch so its minimum number of gradient updates matches a reference run
/// with `reference_batches` per epoch.
TrainConfig match_updates(const TrainConfig& reference, std::size_t reference_batches,
                          std::size_t batches);

/// Indices of training windows carrying any nonzero SIV value.
std::vector<std::size_t> siv_window_indices(const transform::WindowSet& windows);

/// Phase 1 on the SIV-bearing training windows, phase 2 on all of them.
/// Early stopping applies in both phases; with update matching, phase 1 is
/// matched to the full-data update count. Throws DataError when no training
/// window carries an SIV.
TrainResult train_siv_initialize(const model::LinkedModel& init,
                                 const transform::WindowSet& train_set,
                                 const transform::WindowSet& validation, const TrainConfig& cfg,
                                 const EpochCallback& on_epoch = {});

/// Same phases in the opposite order.
TrainResult train_siv_finetune(const model::LinkedModel& init,
                               const transform::WindowSet& train_set,
                               const transform::WindowSet& validation, const TrainConfig& cfg,
                               const EpochCallback& on_epoch = {});

/// Scaled predictions, N × h row-major.
std::vector<double> predict(const model::LinkedModel& m, const transform::WindowSet& windows,
                            std::size_t batch_size = 256);

/// One JSON object per line: a record per epoch then a summary line.
void write_train_log(std::ostream& out, const TrainLog& log);
void save_train_logs(const std::filesystem::path& path, const std::vector<TrainLog>& logs);
std::vector<TrainLog> load_train_logs(const std::filesystem::path& path);

}  // namespace sivcast::training
