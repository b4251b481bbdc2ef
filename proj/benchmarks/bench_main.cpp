#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "sivcast/datagen.hpp"
#include "sivcast/model.hpp"
#include "sivcast/nn.hpp"
#include "sivcast/training.hpp"
#include "sivcast/transform.hpp"

namespace ad = sivcast::ad;
namespace dg = sivcast::datagen;
namespace model = sivcast::model;
namespace nn = sivcast::nn;
namespace tr = sivcast::transform;

namespace {

ad::DArray uniform(ad::Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(ad::element_count(shape));
  for (auto& x : v) x = d(rng);
  return ad::DArray::from_values(std::move(shape), std::move(v));
}

tr::WindowSet toy_windows(std::size_t length) {
  dg::ToyConfig c;
  c.length = length;
  tr::WindowOptions o;
  o.sivs = {tr::Channel::kCarbs};
  return tr::prepare_windows(dg::gen_toy(c), {}, o).train;
}

}  // namespace

static void BM_LstmCellStep(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  auto p = nn::init_lstm_cell(hidden, hidden, rng);
  auto x = uniform({64, hidden}, rng);
  auto s = nn::zero_state(64, hidden);
  for (auto _ : state) {
    ad::Tape tape(false);
    benchmark::DoNotOptimize(nn::lstm_cell_step(tape, p, x, s).h);
  }
}
BENCHMARK(BM_LstmCellStep)->Arg(8)->Arg(32)->Arg(100);

static void BM_ForwardBackward(benchmark::State& state) {
  const auto arch = static_cast<model::Architecture>(state.range(0));
  auto w = toy_windows(1200);
  std::vector<std::size_t> idx(64);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i * 7 % w.size();
  const std::vector<model::SivSpec> sivs{{"carbs", 1, 1}};
  auto m = model::make_model(arch, {}, sivs, 1);
  const auto batch = model::make_batch(w, idx, sivs);
  for (auto _ : state) {
    ad::Tape tape;
    auto loss = ad::mse(tape, model::forward(tape, m, batch).predictions, batch.labels);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss);
  }
  state.SetLabel(model::architecture_name(arch));
}
BENCHMARK(BM_ForwardBackward)
    ->Arg(static_cast<int>(model::Architecture::kEncDec))
    ->Arg(static_cast<int>(model::Architecture::kProposed))
    ->Unit(benchmark::kMillisecond);

static void BM_TrainEpoch(benchmark::State& state) {
  auto w = toy_windows(1200);
  const std::vector<model::SivSpec> sivs{{"carbs", 1, 1}};
  auto init = model::make_model(model::Architecture::kProposed, {}, sivs, 1);
  sivcast::training::TrainConfig cfg;
  cfg.min_epochs = cfg.max_epochs = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sivcast::training::train(init, w, w, cfg).logs);
  }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

static void BM_PhysioDay(benchmark::State& state) {
  dg::PhysioConfig c;
  c.days = 1;
  dg::Rng rng(3);
  const auto events = dg::schedule_events(c, rng);
  for (auto _ : state) benchmark::DoNotOptimize(dg::simulate_physio(c, events).glucose);
}
BENCHMARK(BM_PhysioDay);

BENCHMARK_MAIN();
