#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "fixtures.hpp"
#include "sivcast/error.hpp"
#include "sivcast/training.hpp"

namespace model = sivcast::model;
namespace tr = sivcast::training;
using model::Architecture;
using sivcast::testing::random_windows;
using sivcast::transform::WindowSet;

namespace {

const model::ModelDims kDims{6, 2, 6, 1, true};

std::vector<model::SivSpec> one_siv() { return {{"carbs", 1, 1}}; }

// Target follows a smooth function of the last input value so a small model
// can learn it within a few epochs.
WindowSet learnable_windows(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = random_windows(n, kDims.input_length, kDims.horizon, 1, 0.1, rng);
  for (std::size_t k = 0; k < n; ++k) {
    const double last = w.inputs[(k * kDims.input_length + kDims.input_length - 1) * w.channels];
    for (std::size_t j = 0; j < kDims.horizon; ++j) w.labels[k * kDims.horizon + j] = last;
  }
  return w;
}

WindowSet zeroed(WindowSet w) {
  for (std::size_t i = 0; i < w.inputs.size(); ++i) {
    if (i % w.channels != 0) w.inputs[i] = 0.0;
  }
  return w;
}

tr::TrainConfig quick(std::size_t epochs) {
  tr::TrainConfig c;
  c.batch_size = 16;
  c.min_epochs = epochs;
  c.max_epochs = epochs;
  c.seed = 4;
  return c;
}

}  // namespace

TEST(TrainConfig, Validation) {
  tr::TrainConfig c;
  EXPECT_NO_THROW(tr::validate(c));
  c.lr = 0;
  EXPECT_THROW(tr::validate(c), sivcast::ConfigError);
  c = {};
  c.max_epochs = c.min_epochs - 1;
  EXPECT_THROW(tr::validate(c), sivcast::ConfigError);
  c = {};
  c.patience = 0;
  EXPECT_THROW(tr::validate(c), sivcast::ConfigError);
}

TEST(BatchesPerEpoch, RoundsUp) {
  EXPECT_EQ(tr::batches_per_epoch(64, 64), 1u);
  EXPECT_EQ(tr::batches_per_epoch(65, 64), 2u);
  EXPECT_EQ(tr::batches_per_epoch(1, 64), 1u);
}

TEST(MatchUpdates, ScalesEpochsByBatchRatio) {
  tr::TrainConfig ref;
  ref.min_epochs = 50;
  ref.max_epochs = 200;
  auto m = tr::match_updates(ref, 20, 3);
  EXPECT_GE(m.min_epochs * 3, 50u * 20);
  EXPECT_LT((m.min_epochs - 1) * 3, 50u * 20);
  EXPECT_GE(m.max_epochs, m.min_epochs);
  EXPECT_EQ(tr::match_updates(ref, 5, 5).min_epochs, 50u);
  EXPECT_THROW(tr::match_updates(ref, 0, 5), sivcast::ContractError);
}

TEST(Train, LossDecreasesAndBestModelIsReturned) {
  auto train_set = learnable_windows(96, 1);
  auto val = learnable_windows(32, 2);
  auto init = model::make_model(Architecture::kProposed, kDims, one_siv(), 3);
  const double before = tr::evaluate_loss(init, val);
  auto r = tr::train(init, train_set, val, quick(15));
  ASSERT_EQ(r.logs.size(), 1u);
  const auto& log = r.logs[0];
  EXPECT_EQ(log.epochs.size(), 15u);
  EXPECT_LT(log.epochs.back().train_loss, log.epochs.front().train_loss);
  EXPECT_LT(log.best_val_loss, before);
  EXPECT_EQ(log.updates(), 15u * tr::batches_per_epoch(96, 16));
  double best = INFINITY;
  for (const auto& e : log.epochs) best = std::min(best, e.val_loss);
  EXPECT_EQ(log.best_val_loss, best);
  EXPECT_EQ(log.epochs[log.best_epoch - 1].val_loss, best);
  EXPECT_DOUBLE_EQ(tr::evaluate_loss(r.model, val), best);
}

TEST(Train, UnlimitedPatienceRunsToMaxEpochs) {
  auto w = learnable_windows(32, 5);
  auto init = model::make_model(Architecture::kEncDec, kDims, one_siv(), 1);
  auto cfg = quick(2);
  cfg.max_epochs = 9;
  cfg.patience = tr::kUnlimitedPatience;
  EXPECT_EQ(tr::train(init, w, w, cfg).logs[0].epochs.size(), 9u);
  cfg.patience = 1;
  EXPECT_LE(tr::train(init, w, w, cfg).logs[0].epochs.size(), 9u);
}

TEST(Train, EarlyStoppingRespectsMinimumAndPatience) {
  auto w = learnable_windows(32, 6);
  auto v = learnable_windows(16, 7);
  auto init = model::make_model(Architecture::kEncDec, kDims, one_siv(), 2);
  auto cfg = quick(3);
  cfg.max_epochs = 40;
  cfg.patience = 2;
  const auto log = tr::train(init, w, v, cfg).logs[0];
  const std::size_t n = log.epochs.size();
  EXPECT_GE(n, 3u);
  if (n < 40) {
    EXPECT_GE(n - log.best_epoch, 2u);
  }
}

TEST(Train, DeterministicForFixedSeed) {
  auto w = learnable_windows(48, 8);
  auto init = model::make_model(Architecture::kProposed, kDims, one_siv(), 9);
  auto a = tr::train(init, w, w, quick(4));
  auto b = tr::train(init, w, w, quick(4));
  EXPECT_EQ(tr::predict(a.model, w), tr::predict(b.model, w));
  auto other = quick(4);
  other.seed = 5;
  EXPECT_NE(tr::predict(tr::train(init, w, w, other).model, w), tr::predict(a.model, w));
}

TEST(Train, InitialModelIsUntouched) {
  auto w = learnable_windows(32, 8);
  auto init = model::make_model(Architecture::kProposed, kDims, one_siv(), 9);
  const auto before = tr::predict(init, w);
  tr::train(init, w, w, quick(2));
  EXPECT_EQ(tr::predict(init, w), before);
}

TEST(Train, GatedModelOnZeroedDataEqualsBaseline) {
  auto w = zeroed(learnable_windows(48, 10));
  auto v = zeroed(learnable_windows(16, 11));
  auto proposed = model::make_model(Architecture::kProposed, kDims, one_siv(), 12);
  auto baseline = model::make_model(Architecture::kEncDec, kDims, one_siv(), 12);
  auto a = tr::train(proposed, w, v, quick(3));
  auto b = tr::train(baseline, w, v, quick(3));
  EXPECT_EQ(tr::predict(a.model, v), tr::predict(b.model, v));
  EXPECT_EQ(a.logs[0].best_val_loss, b.logs[0].best_val_loss);
}

TEST(Train, EmptySetIsDataError) {
  auto w = learnable_windows(8, 1);
  auto empty = w.subset(std::vector<std::size_t>{});
  auto init = model::make_model(Architecture::kEncDec, kDims, one_siv(), 1);
  EXPECT_THROW(tr::train(init, empty, w, quick(1)), sivcast::DataError);
  EXPECT_THROW(tr::train(init, w, empty, quick(1)), sivcast::DataError);
}

TEST(Train, CallbackSeesEveryEpoch) {
  auto w = learnable_windows(16, 1);
  auto init = model::make_model(Architecture::kEncDec, kDims, one_siv(), 1);
  std::size_t calls = 0;
  tr::train(init, w, w, quick(3), [&](const tr::TrainLog&, const tr::EpochRecord& e) {
    EXPECT_EQ(e.epoch, ++calls);
  });
  EXPECT_EQ(calls, 3u);
}

TEST(ResamplingBaselines, PhasesAndUpdateMatching) {
  auto w = learnable_windows(96, 13);
  const auto siv_idx = tr::siv_window_indices(w);
  ASSERT_GT(siv_idx.size(), 0u);
  ASSERT_LT(siv_idx.size(), w.size());
  auto init = model::make_model(Architecture::kEncDec, kDims, one_siv(), 1);
  auto cfg = quick(2);

  auto ini = tr::train_siv_initialize(init, w, w, cfg);
  ASSERT_EQ(ini.logs.size(), 2u);
  EXPECT_EQ(ini.logs[0].phase, "siv_subset");
  EXPECT_EQ(ini.logs[1].phase, "full");
  const std::size_t full_updates = 2 * tr::batches_per_epoch(w.size(), cfg.batch_size);
  EXPECT_GE(ini.logs[0].updates(), full_updates);
  EXPECT_LT(ini.logs[0].updates(),
            full_updates + tr::batches_per_epoch(siv_idx.size(), cfg.batch_size));

  auto fin = tr::train_siv_finetune(init, w, w, cfg);
  EXPECT_EQ(fin.logs[0].phase, "full");
  EXPECT_EQ(fin.logs[1].phase, "siv_subset");

  cfg.update_matching = false;
  auto plain = tr::train_siv_initialize(init, w, w, cfg);
  EXPECT_EQ(plain.logs[0].epochs.size(), 2u);
}

TEST(ResamplingBaselines, NoSivWindowsIsDataError) {
  auto w = zeroed(learnable_windows(16, 1));
  auto init = model::make_model(Architecture::kEncDec, kDims, one_siv(), 1);
  EXPECT_THROW(tr::train_siv_initialize(init, w, w, quick(1)), sivcast::DataError);
  EXPECT_THROW(tr::train_siv_finetune(init, w, w, quick(1)), sivcast::DataError);
}

TEST(Predict, ShapeAndBatchInvariance) {
  auto w = learnable_windows(37, 2);
  auto m = model::make_model(Architecture::kProposed, kDims, one_siv(), 3);
  auto a = tr::predict(m, w, 256);
  auto b = tr::predict(m, w, 5);
  ASSERT_EQ(a.size(), 37u * kDims.horizon);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(TrainLogs, RoundTripWithMetadataAndNonFinite) {
  tr::TrainLog log;
  log.phase = "full";
  log.epochs = {{1, 0.5, 0.25, 3}, {2, std::nan(""), 0.125, 6}};
  log.best_epoch = 1;
  log.best_val_loss = 0.25;
  log.checkpoint = "model.ckpt";
  log.metadata = {{"seed", "7"}, {"config_hash", "00ff"}};
  tr::TrainLog fresh;
  const auto path = std::filesystem::temp_directory_path() / "sivcast_train_log_test.jsonl";
  tr::save_train_logs(path, {log, fresh});
  auto back = tr::load_train_logs(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].phase, "full");
  ASSERT_EQ(back[0].epochs.size(), 2u);
  EXPECT_EQ(back[0].epochs[1].updates, 6u);
  EXPECT_TRUE(std::isnan(back[0].epochs[1].train_loss));
  EXPECT_EQ(back[0].best_val_loss, 0.25);
  EXPECT_EQ(back[0].metadata, log.metadata);
  EXPECT_EQ(back[0].checkpoint, "model.ckpt");
  EXPECT_TRUE(std::isinf(back[1].best_val_loss));
}

TEST(TrainLogs, MissingFileIsIoError) {
  EXPECT_THROW(tr::load_train_logs("/nonexistent/dir/log.jsonl"), sivcast::IoError);
}
