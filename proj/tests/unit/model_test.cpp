#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "sivcast/error.hpp"
#include "sivcast/grad_check.hpp"
#include "sivcast/model.hpp"

namespace ad = sivcast::ad;
namespace model = sivcast::model;
using ad::DArray;
using ad::Tape;
using model::Architecture;
using sivcast::testing::random_windows;

namespace {

const model::ModelDims kTiny{6, 3, 8, 1, true};

std::vector<model::SivSpec> two_sivs() { return {{"carbs", 1, 1}, {"bolus", 2, -1}}; }

std::vector<double> vec(const DArray& a) { return {a.values().begin(), a.values().end()}; }

model::Batch batch_of(const sivcast::transform::WindowSet& w) {
  return model::make_batch(w, two_sivs());
}

}  // namespace

TEST(Mechanisms, TableMatchesArchitectureDefinitions) {
  auto p = model::mechanisms(Architecture::kProposed);
  EXPECT_TRUE(p.siv_decoders && p.gating && p.restriction && p.signed_contribution &&
              p.siv_input_to_phi);
  EXPECT_FALSE(p.siv_input_to_theta);
  EXPECT_FALSE(model::mechanisms(Architecture::kEncDec).siv_decoders);
  EXPECT_FALSE(model::mechanisms(Architecture::kNoGating).gating);
  EXPECT_FALSE(model::mechanisms(Architecture::kNoRestriction).restriction);
  EXPECT_FALSE(model::mechanisms(Architecture::kNoSivInput).siv_input_to_phi);
  EXPECT_TRUE(model::mechanisms(Architecture::kOnlySivInput).siv_input_to_theta);
  EXPECT_FALSE(model::mechanisms(Architecture::kOnlySivInput).siv_decoders);
}

TEST(Mechanisms, NamesRoundTripAndUnknownIsConfigError) {
  for (auto a : {Architecture::kProposed, Architecture::kEncDec, Architecture::kFullCapacity,
                 Architecture::kNoGating, Architecture::kNoRestriction, Architecture::kNoSivInput,
                 Architecture::kOnlySivInput}) {
    EXPECT_EQ(model::parse_architecture(model::architecture_name(a)), a);
  }
  EXPECT_THROW(model::parse_architecture("transformer"), sivcast::ConfigError);
}

TEST(ShiftedSivInput, PadsByStep) {
  const std::vector<double> siv{5, 7};
  EXPECT_EQ(model::shifted_siv_input(siv, 1, 2), (std::vector<double>{0, 0, 5, 7}));
  EXPECT_EQ(model::shifted_siv_input(siv, 2, 2), (std::vector<double>{0, 5, 7, 0}));
  EXPECT_THROW(model::shifted_siv_input(siv, 3, 2), sivcast::ContractError);
  EXPECT_THROW(model::shifted_siv_input(siv, 0, 2), sivcast::ContractError);
}

TEST(ScaleSivToState, MatchesStateMean) {
  const std::vector<double> siv{0, 2, 0, 6};
  const std::vector<double> state{1, 3};
  auto out = model::scale_siv_to_state(siv, state);
  double mean = 0;
  for (double v : out) mean += v / out.size();
  EXPECT_DOUBLE_EQ(mean, 2.0);
  EXPECT_EQ(model::scale_siv_to_state(std::vector<double>{0, 0}, state),
            (std::vector<double>{0, 0}));
}

TEST(ScaleSivToState, TapeFormAgreesRowwise) {
  auto siv = DArray::from_values({2, 3}, {1, 2, 3, 0, 0, 0});
  auto state = DArray::from_values({2, 2}, {4, 6, -1, 1});
  Tape tape(false);
  auto out = model::scale_siv_to_state(tape, siv, state);
  auto row0 = model::scale_siv_to_state(std::vector<double>{1, 2, 3}, std::vector<double>{4, 6});
  for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(out[j], row0[j]);
  for (int j = 3; j < 6; ++j) EXPECT_EQ(out[j], 0.0);
}

TEST(SivSpecs, ForChannelsCarrySigns) {
  std::vector<sivcast::transform::Channel> ch{sivcast::transform::Channel::kBolus,
                                             sivcast::transform::Channel::kCarbs};
  auto specs = model::sivs_for_channels(ch);
  ASSERT_EQ(specs.size(), 2u);
  EXPECT_EQ(specs[0].channel, 1u);
  EXPECT_EQ(specs[0].sign, -1);
  EXPECT_EQ(specs[1].sign, 1);
  std::vector<sivcast::transform::Channel> bad{sivcast::transform::Channel::kGlucose};
  EXPECT_THROW(model::sivs_for_channels(bad), sivcast::ContractError);
}

TEST(Forward, PredictionShape) {
  std::mt19937_64 rng(1);
  auto w = random_windows(5, 6, 3, 2, 0.3, rng);
  for (auto a : {Architecture::kProposed, Architecture::kEncDec, Architecture::kFullCapacity,
                 Architecture::kOnlySivInput}) {
    auto m = model::make_model(a, kTiny, two_sivs(), 4);
    Tape tape(false);
    EXPECT_EQ(model::forward(tape, m, batch_of(w)).predictions.shape(), (ad::Shape{5, 3}));
  }
}

TEST(Forward, GatingWithAllZeroSivsEqualsThetaOnlyPath) {
  std::mt19937_64 rng(7);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto w = random_windows(4, 6, 3, 2, 0.0, rng);
    auto m = model::make_model(Architecture::kProposed, kTiny, two_sivs(), seed);
    Tape t1(false), t2(false);
    auto linked = model::forward_linked(t1, m, batch_of(w)).predictions;
    auto base = model::forward_baseline(t2, m, batch_of(w));
    EXPECT_EQ(vec(linked), vec(base));
  }
}

TEST(Forward, GatedRowsAreExactlyThoseWithSiv) {
  std::mt19937_64 rng(9);
  auto w = random_windows(30, 6, 3, 2, 0.08, rng);
  auto m = model::make_model(Architecture::kProposed, kTiny, two_sivs(), 2);
  Tape tape(false);
  auto trace = model::forward(tape, m, batch_of(w));
  for (std::size_t n = 0; n < w.size(); ++n) {
    for (std::size_t s = 0; s < 2; ++s) EXPECT_EQ(trace.gated[s][n], w.has_siv(n, s));
  }
}

TEST(Forward, ZeroSivRowsUnaffectedByOtherRows) {
  std::mt19937_64 rng(12);
  auto w = random_windows(8, 6, 3, 2, 0.2, rng);
  for (std::size_t t = 0; t < 6; ++t) {
    w.inputs[(0 * 6 + t) * 3 + 1] = 0.0;
    w.inputs[(0 * 6 + t) * 3 + 2] = 0.0;
  }
  auto m = model::make_model(Architecture::kProposed, kTiny, two_sivs(), 3);
  Tape t1(false), t2(false);
  auto full = model::forward(t1, m, batch_of(w)).predictions;
  std::vector<std::size_t> first{0};
  auto single = model::forward(t2, m, model::make_batch(w, first, two_sivs())).predictions;
  // Matrix kernels may round differently for other batch sizes.
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(full[j], single[j], 1e-12);
}

TEST(Forward, ContributionsHaveSignOfK) {
  std::mt19937_64 rng(5);
  auto w = random_windows(10, 6, 3, 2, 0.3, rng);
  auto m = model::make_model(Architecture::kProposed, kTiny, two_sivs(), 6);
  Tape tape(false);
  auto trace = model::forward(tape, m, batch_of(w));
  for (const auto& step : trace.contributions) {
    for (std::size_t s = 0; s < 2; ++s) {
      for (double v : step[s].values()) EXPECT_GE(v * m.sivs[s].sign, 0.0);
    }
  }
}

TEST(Forward, NoRestrictionAllowsWrongSignedContribution) {
  // Every phi output is strongly negative once the output gate is saturated and
  // the cell input is pushed negative; k = +1 keeps it negative without ReLU.
  auto make = [](Architecture a) {
    auto m = model::make_model(a, kTiny, {{"carbs", 1, 1}}, 1);
    auto& cell = m.phi[0].cells[0];
    auto b = cell.bias.mutable_values();
    const std::size_t H = kTiny.hidden;
    for (std::size_t j = 0; j < H; ++j) {
      b[j] = 10;           // input gate open
      b[2 * H + j] = -10;  // candidate strongly negative
      b[3 * H + j] = 10;   // output gate open
    }
    return m;
  };
  std::mt19937_64 rng(4);
  auto w = random_windows(3, 6, 3, 1, 0.5, rng);
  auto batch = model::make_batch(w, {{"carbs", 1, 1}});
  Tape t1(false), t2(false);
  auto free = model::forward(t1, make(Architecture::kNoRestriction), batch);
  auto restricted = model::forward(t2, make(Architecture::kProposed), batch);
  double free_min = 0.0, restricted_min = 0.0;
  for (double v : free.contributions[0][0].values()) free_min = std::min(free_min, v);
  for (double v : restricted.contributions[0][0].values()) restricted_min = std::min(restricted_min, v);
  EXPECT_LT(free_min, -0.5);
  EXPECT_EQ(restricted_min, 0.0);
}

TEST(Forward, FlipRestrictionSignNegatesContributions) {
  std::mt19937_64 rng(15);
  auto w = random_windows(6, 6, 3, 2, 0.3, rng);
  auto m = model::make_model(Architecture::kProposed, kTiny, two_sivs(), 8);
  auto f = model::flip_restriction_sign(m);
  EXPECT_EQ(f.sivs[0].sign, -1);
  EXPECT_EQ(f.sivs[1].sign, 1);
  EXPECT_EQ(m.sivs[0].sign, 1);
  Tape t1(false), t2(false);
  auto a = model::forward(t1, m, batch_of(w));
  auto b = model::forward(t2, f, batch_of(w));
  // Only the first step shares its input state; later steps diverge.
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t i = 0; i < a.contributions[0][s].size(); ++i) {
      EXPECT_EQ(a.contributions[0][s][i], -b.contributions[0][s][i]);
    }
  }
}

TEST(Forward, EveryArchitecturePassesGradCheck) {
  std::mt19937_64 rng(31);
  auto w = random_windows(3, 6, 3, 2, 0.25, rng);
  // Ensure at least one window engages each phi.
  w.inputs[(0 * 6 + 2) * 3 + 1] = 0.3;
  w.inputs[(1 * 6 + 4) * 3 + 2] = 0.2;
  auto batch = batch_of(w);
  for (auto a : {Architecture::kProposed, Architecture::kEncDec, Architecture::kFullCapacity,
                 Architecture::kNoGating, Architecture::kNoRestriction, Architecture::kNoSivInput,
                 Architecture::kOnlySivInput}) {
    auto m = model::make_model(a, kTiny, two_sivs(), 17);
    auto params = m.parameter_arrays();
    sivcast::testing::randomize_parameters(params, 23);
    auto report = ad::grad_check(
        [&](Tape& tape) {
          return ad::mse(tape, model::forward(tape, m, batch).predictions, batch.labels);
        },
        params, 1e-4);
    EXPECT_TRUE(report.passed) << model::architecture_name(a) << ": " << report.max_rel_error;
  }
}

TEST(MakeModel, SharedInitOrderAcrossArchitectures) {
  auto p = model::make_model(Architecture::kProposed, kTiny, two_sivs(), 5);
  auto e = model::make_model(Architecture::kEncDec, kTiny, two_sivs(), 5);
  EXPECT_EQ(vec(p.encoder.cells[0].w_ih), vec(e.encoder.cells[0].w_ih));
  EXPECT_EQ(vec(p.theta.cells[0].w_hh), vec(e.theta.cells[0].w_hh));
  EXPECT_EQ(vec(p.fc.weight), vec(e.fc.weight));
  EXPECT_EQ(p.phi.size(), 2u);
  EXPECT_TRUE(e.phi.empty());
}

TEST(MakeModel, FullCapacityMatchesProposedParameterCount) {
  auto p = model::make_model(Architecture::kProposed, kTiny, two_sivs(), 1);
  auto f = model::make_model(Architecture::kFullCapacity, kTiny, two_sivs(), 1);
  auto e = model::make_model(Architecture::kEncDec, kTiny, two_sivs(), 1);
  EXPECT_GT(p.parameter_count(), e.parameter_count());
  // Within one theta-layer's worth of the proposed model.
  const double ratio = static_cast<double>(f.parameter_count()) / p.parameter_count();
  EXPECT_GT(ratio, 0.8);
  EXPECT_LT(ratio, 1.25);
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  std::mt19937_64 rng(2);
  auto w = random_windows(4, 6, 3, 2, 0.3, rng);
  auto m = model::make_model(Architecture::kProposed, kTiny, two_sivs(), 9);
  std::stringstream ss;
  sivcast::write_checkpoint(ss, model::to_checkpoint(m));
  auto back = model::from_checkpoint(sivcast::read_checkpoint(ss));
  Tape t1(false), t2(false);
  EXPECT_EQ(vec(model::forward(t1, m, batch_of(w)).predictions),
            vec(model::forward(t2, back, batch_of(w)).predictions));
  EXPECT_EQ(back.sivs[1].sign, -1);
}
