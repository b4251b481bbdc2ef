#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sivcast/error.hpp"
#include "sivcast/transform.hpp"

namespace tr = sivcast::transform;
using tr::Channel;
using tr::IndividualSeries;

namespace {

IndividualSeries ramp_series(std::size_t n) {
  IndividualSeries s;
  s.id = "ramp";
  for (std::size_t i = 0; i < n; ++i) {
    s.glucose.push_back(100.0 + i);
    s.carbs.push_back(i % 7 == 3 ? 20.0 : 0.0);
    s.bolus.push_back(i % 11 == 5 ? 2.0 : 0.0);
  }
  return s;
}

}  // namespace

TEST(SumTotal, PrefixSums) {
  EXPECT_EQ(tr::sum_total(std::vector<double>{0, 3, 0, 2}), (std::vector<double>{0, 3, 3, 5}));
  EXPECT_EQ(tr::sum_total(std::vector<double>{}), std::vector<double>{});
  EXPECT_THROW(tr::sum_total(std::vector<double>{1, -1}), sivcast::DataError);
}

TEST(Scale, RoundTripAndDivisors) {
  auto s = ramp_series(10);
  tr::ScaleSpec spec;
  auto scaled = tr::scale(s, spec);
  EXPECT_DOUBLE_EQ(scaled.glucose[0], 100.0 / 400.0);
  EXPECT_DOUBLE_EQ(scaled.carbs[3], 20.0 / 200.0);
  EXPECT_DOUBLE_EQ(scaled.bolus[5], 2.0 / 50.0);
  auto back = tr::unscale(scaled, spec);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_DOUBLE_EQ(back.glucose[i], s.glucose[i]);
  spec.carbs = 0;
  EXPECT_THROW(tr::scale(s, spec), sivcast::ContractError);
}

TEST(ZeroSivs, KeepsTarget) {
  auto s = ramp_series(20);
  auto z = tr::zero_sivs(s);
  EXPECT_EQ(z.glucose, s.glucose);
  for (double v : z.carbs) EXPECT_EQ(v, 0.0);
  for (double v : z.bolus) EXPECT_EQ(v, 0.0);
}

TEST(Windows, LabelsAreTheNextHPoints) {
  auto s = ramp_series(30);
  tr::WindowOptions o{4, 3, {Channel::kCarbs, Channel::kBolus}, false};
  auto w = tr::make_windows(s, o);
  ASSERT_EQ(w.size(), 30u - 4 - 3 + 1);
  for (std::size_t n = 0; n < w.size(); ++n) {
    const std::size_t start = w.starts[n];
    for (std::size_t t = 0; t < 4; ++t) {
      EXPECT_EQ(w.input(n, t, 0), s.glucose[start + t]);
      EXPECT_EQ(w.input(n, t, 1), s.carbs[start + t]);
      EXPECT_EQ(w.input(n, t, 2), s.bolus[start + t]);
    }
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(w.label(n, j), s.glucose[start + 4 + j]);
  }
}

TEST(Windows, SumTotalRestartsInEveryWindow) {
  IndividualSeries s;
  s.id = "s";
  s.glucose.assign(8, 1.0);
  s.carbs = {1, 0, 2, 0, 0, 0, 0, 0};
  s.bolus.assign(8, 0.0);
  tr::WindowOptions o{3, 1, {Channel::kCarbs}, true};
  auto w = tr::make_windows(s, o);
  EXPECT_EQ(w.input(0, 2, 1), 3.0);
  EXPECT_EQ(w.input(1, 0, 1), 0.0);
  EXPECT_EQ(w.input(1, 1, 1), 2.0);
  EXPECT_EQ(w.input(1, 2, 1), 2.0);
}

TEST(Windows, MissingTargetDropsWindows) {
  auto s = ramp_series(20);
  s.glucose[10] = std::nan("");
  tr::WindowOptions o{4, 2, {Channel::kCarbs}, true};
  auto w = tr::make_windows(s, o);
  for (auto start : w.starts) EXPECT_TRUE(start > 10 || start + 6 <= 10);
  EXPECT_EQ(w.size(), 15u - 6);
}

TEST(Windows, TooShortIsDataError) {
  tr::WindowOptions o{4, 3, {Channel::kCarbs}, true};
  EXPECT_THROW(tr::make_windows(ramp_series(6), o), sivcast::DataError);
}

TEST(Windows, SivPresenceAndSubset) {
  auto s = ramp_series(40);
  tr::WindowOptions o{3, 1, {Channel::kCarbs, Channel::kBolus}, true};
  auto w = tr::make_windows(s, o);
  for (std::size_t n = 0; n < w.size(); ++n) {
    bool carbs = false;
    for (std::size_t t = 0; t < 3; ++t) carbs |= s.carbs[w.starts[n] + t] != 0.0;
    EXPECT_EQ(w.has_siv(n, 0), carbs);
  }
  std::vector<std::size_t> pick{5, 2};
  auto sub = w.subset(pick);
  ASSERT_EQ(sub.size(), 2u);
  EXPECT_EQ(sub.starts[0], w.starts[5]);
  EXPECT_EQ(sub.label(1, 0), w.label(2, 0));
  std::vector<std::size_t> bad{1000};
  EXPECT_THROW(w.subset(bad), sivcast::BoundsError);
}

TEST(Split, FractionsAndRemainderToTraining) {
  auto parts = tr::split(ramp_series(101), {}, 5);
  EXPECT_EQ(parts.validation.size(), 15u);
  EXPECT_EQ(parts.test.size(), 15u);
  EXPECT_EQ(parts.train.size(), 71u);
  EXPECT_EQ(parts.validation.first_index, 71u);
  EXPECT_EQ(parts.test.glucose.front(), 100.0 + 86);
}

TEST(Split, RejectsBadFractionsAndShortSegments) {
  EXPECT_THROW(tr::split(ramp_series(100), {0.5, 0.3, 0.3}, 1), sivcast::ContractError);
  EXPECT_THROW(tr::split(ramp_series(40), {}, 10), sivcast::DataError);
}

TEST(PrepareWindows, ScalesEachSegment) {
  tr::WindowOptions o{4, 2, {Channel::kCarbs}, true};
  auto w = tr::prepare_windows(ramp_series(100), {}, o);
  EXPECT_EQ(w.train.size(), 70u - 5);
  EXPECT_EQ(w.test.size(), 15u - 5);
  EXPECT_DOUBLE_EQ(w.train.input(0, 0, 0), 100.0 / 400.0);
}

TEST(Csv, RoundTrip) {
  auto s = ramp_series(12);
  s.glucose[4] = std::nan("");
  s.first_index = 7;
  std::stringstream ss;
  tr::write_series_csv(ss, s);
  auto back = tr::read_series_csv(ss, "x");
  EXPECT_EQ(back.first_index, 7u);
  ASSERT_EQ(back.size(), 12u);
  EXPECT_TRUE(std::isnan(back.glucose[4]));
  EXPECT_EQ(back.glucose[5], s.glucose[5]);
  EXPECT_EQ(back.carbs, s.carbs);
}

TEST(Csv, SchemaErrorsCiteRowAndColumn) {
  auto expect_error = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      tr::read_series_csv(in, "x");
      FAIL() << "accepted: " << text;
    } catch (const sivcast::DataError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error("time,glucose\n", "row 1");
  expect_error("t,glucose,carbs,bolus\n0,100,0,0\n1,abc,0,0\n", "row 3, column glucose");
  expect_error("t,glucose,carbs,bolus\n0,100,0\n", "row 2");
  expect_error("t,glucose,carbs,bolus\n0,100,0,0\n5,100,0,0\n", "row 3, column t");
  expect_error("t,glucose,carbs,bolus\n0,100,-3,0\n", "row 2, column carbs");
}
