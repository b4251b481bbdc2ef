#include "sivcast/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "sivcast/error.hpp"
#include "sivcast/seed.hpp"

namespace sivcast::training {

using model::LinkedModel;
using transform::WindowSet;
using json = nlohmann::json;

void validate(const TrainConfig& c) {
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) throw ConfigError("train: lr must be positive");
  if (c.weight_decay < 0.0) throw ConfigError("train: weight_decay must be nonnegative");
  if (c.batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (c.min_epochs == 0) throw ConfigError("train: min_epochs must be positive");
  if (c.patience == 0) throw ConfigError("train: patience must be positive");
  if (c.max_epochs < c.min_epochs) throw ConfigError("train: max_epochs must be >= min_epochs");
}

std::size_t batches_per_epoch(std::size_t windows, std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("batches_per_epoch: batch_size must be positive");
  return (windows + batch_size - 1) / batch_size;
}

namespace {

std::vector<ad::DArray> snapshot(const LinkedModel& m) {
  std::vector<ad::DArray> out;
  for (const auto& p : m.parameter_arrays()) out.push_back(p.clone());
  return out;
}

void restore(const LinkedModel& m, const std::vector<ad::DArray>& saved) {
  auto params = m.parameter_arrays();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].mutable_values();
    auto src = saved[i].values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

void require_windows(const WindowSet& w, const char* what) {
  if (w.size() == 0) throw DataError(std::string("train: empty ") + what + " set");
}

// Continues training `m` in place; returns the phase log.
TrainLog run_phase(LinkedModel& m, const WindowSet& train_set, const WindowSet& validation,
                   const TrainConfig& cfg, const std::string& phase,
                   const EpochCallback& on_epoch) {
  validate(cfg);
  require_windows(train_set, "training");
  require_windows(validation, "validation");

  auto params = m.parameter_arrays();
  std::vector<std::string> names;
  for (const auto& p : m.parameters()) names.push_back(p.name);
  nn::AdamOptions opts;
  opts.lr = cfg.lr;
  opts.weight_decay = cfg.weight_decay;
  nn::AdamState adam = nn::make_adam_state(params, opts);

  TrainLog log;
  log.phase = phase;
  std::vector<ad::DArray> best = snapshot(m);
  std::vector<std::size_t> order(train_set.size());
  std::size_t updates = 0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    nn::Rng rng(derive_seed(cfg.seed, {fnv1a64(phase), epoch}));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + begin, end - begin);
      model::Batch batch = model::make_batch(train_set, idx, m.sivs);
      for (auto& p : params) p.zero_grad();
      ad::Tape tape;
      auto trace = model::forward(tape, m, batch);
      auto loss = ad::mse(tape, trace.predictions, batch.labels);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch_index),
                              epoch, batch_index);
      }
      tape.backward(loss);
      try {
        nn::adam_step(adam, params, names);
      } catch (const NumericalError& e) {
        throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch_index),
                              epoch, batch_index);
      }
      ++updates;
      loss_sum += value * static_cast<double>(idx.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = evaluate_loss(m, validation);
    rec.updates = updates;
    if (!std::isfinite(rec.val_loss)) {
      throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch),
                            epoch, batch_index);
    }
    log.epochs.push_back(rec);
    if (rec.val_loss < log.best_val_loss) {
      log.best_val_loss = rec.val_loss;
      log.best_epoch = epoch;
      best = snapshot(m);
      since_best = 0;
    } else {
      ++since_best;
    }
    if (on_epoch) on_epoch(log, rec);
    if (epoch >= cfg.min_epochs && cfg.patience != kUnlimitedPatience &&
        since_best >= cfg.patience) {
      break;
    }
  }
  restore(m, best);
  return log;
}

WindowSet siv_subset(const WindowSet& w) {
  auto idx = siv_window_indices(w);
  if (idx.empty()) {
    throw DataError("resampling baseline: no training window of '" + w.individual +
                    "' carries a nonzero SIV");
  }
  return w.subset(idx);
}

}  // namespace

double evaluate_loss(const LinkedModel& m, const WindowSet& windows, std::size_t batch_size) {
  if (windows.size() == 0) throw DataError("evaluate_loss: empty window set");
  auto preds = predict(m, windows, batch_size);
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - windows.labels[i];
    acc += d * d;
  }
  return acc / static_cast<double>(preds.size());
}

std::vector<double> predict(const LinkedModel& m, const WindowSet& windows,
                            std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("predict: batch_size must be positive");
  std::vector<double> out;
  out.reserve(windows.size() * windows.horizon);
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
    const std::size_t end = std::min(windows.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    model::Batch batch = model::make_batch(windows, idx, m.sivs);
    ad::Tape tape(false);
    auto trace = model::forward(tape, m, batch);
    auto v = trace.predictions.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

TrainResult train(const LinkedModel& init, const WindowSet& train_set,
                  const WindowSet& validation, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  TrainResult r{init.clone(), {}};
  r.logs.push_back(run_phase(r.model, train_set, validation, cfg, "train", on_epoch));
  return r;
}

TrainConfig match_updates(const TrainConfig& reference, std::size_t reference_batches,
                          std::size_t batches) {
  if (reference_batches == 0 || batches == 0) {
    throw ContractError("match_updates: batch counts must be positive");
  }
  auto scale = [&](std::size_t epochs) {
    return (epochs * reference_batches + batches - 1) / batches;
  };
  TrainConfig out = reference;
  out.min_epochs = scale(reference.min_epochs);
  out.max_epochs = std::max(out.min_epochs, scale(reference.max_epochs));
  return out;
}

std::vector<std::size_t> siv_window_indices(const WindowSet& w) {
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < w.size(); ++n) {
    if (w.has_any_siv(n)) out.push_back(n);
  }
  return out;
}

TrainResult train_siv_initialize(const LinkedModel& init, const WindowSet& train_set,
                                 const WindowSet& validation, const TrainConfig& cfg,
                                 const EpochCallback& on_epoch) {
  require_windows(train_set, "training");
  WindowSet subset = siv_subset(train_set);
  TrainConfig sub_cfg = cfg;
  if (cfg.update_matching) {
    sub_cfg = match_updates(cfg, batches_per_epoch(train_set.size(), cfg.batch_size),
                            batches_per_epoch(subset.size(), cfg.batch_size));
  }
  TrainResult r{init.clone(), {}};
  r.logs.push_back(run_phase(r.model, subset, validation, sub_cfg, "siv_subset", on_epoch));
  r.logs.push_back(run_phase(r.model, train_set, validation, cfg, "full", on_epoch));
  return r;
}

TrainResult train_siv_finetune(const LinkedModel& init, const WindowSet& train_set,
                               const WindowSet& validation, const TrainConfig& cfg,
                               const EpochCallback& on_epoch) {
  require_windows(train_set, "training");
  WindowSet subset = siv_subset(train_set);
  TrainConfig sub_cfg = cfg;
  if (cfg.update_matching) {
    sub_cfg = match_updates(cfg, batches_per_epoch(train_set.size(), cfg.batch_size),
                            batches_per_epoch(subset.size(), cfg.batch_size));
  }
  TrainResult r{init.clone(), {}};
  r.logs.push_back(run_phase(r.model, train_set, validation, cfg, "full", on_epoch));
  r.logs.push_back(run_phase(r.model, subset, validation, sub_cfg, "siv_subset", on_epoch));
  return r;
}

// Logs ------------------------------------------------------------------------

void write_train_log(std::ostream& out, const TrainLog& log) {
  for (const auto& e : log.epochs) {
    json j{{"phase", log.phase},           {"epoch", e.epoch},
           {"train_loss", e.train_loss},   {"val_loss", e.val_loss},
           {"updates", e.updates}};
    out << j.dump() << '\n';
  }
  json s{{"phase", log.phase},
         {"summary", true},
         {"best_epoch", log.best_epoch},
         {"best_val_loss", log.best_val_loss},
         {"updates", log.updates()},
         {"checkpoint", log.checkpoint}};
  if (!log.metadata.empty()) s["metadata"] = log.metadata;
  out << s.dump() << '\n';
}

void save_train_logs(const std::filesystem::path& path, const std::vector<TrainLog>& logs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : logs) write_train_log(out, l);
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<TrainLog> load_train_logs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<TrainLog> logs;
  TrainLog current;
  std::string line;
  std::size_t line_no = 0;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json j = json::parse(line);
      current.phase = j.at("phase").get<std::string>();
      if (j.contains("summary")) {
        current.best_epoch = j.at("best_epoch").get<std::size_t>();
        const auto& best = j.at("best_val_loss");
        current.best_val_loss =
            best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>();
        current.checkpoint = j.at("checkpoint").get<std::string>();
        if (j.contains("metadata")) {
          current.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
        }
        logs.push_back(std::move(current));
        current = TrainLog{};
        continue;
      }
      // Non-finite losses are stored as null.
      auto loss = [&](const char* key) {
        const auto& v = j.at(key);
        return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
      };
      current.epochs.push_back({j.at("epoch").get<std::size_t>(), loss("train_loss"),
                                loss("val_loss"),
                                j.at("updates").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
  }
  return logs;
}

}  // namespace sivcast::training
