#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "rvp/population.hpp"
#include "rvp/rng.hpp"
#include "rvp/synth.hpp"

using namespace rvp;

namespace {

Population parse(const std::string& text, Schema schema = {}) {
  std::istringstream in(text);
  return load_population(in, schema);
}

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::ConfigError;
}

}  // namespace

TEST(Load, ThreeRows) {
  const auto pop = parse("outcome,prediction\n10,12\n20,18\n30,33\n");
  ASSERT_EQ(pop.size(), 3u);
  EXPECT_EQ(pop.labeled_count(), 3u);
  EXPECT_EQ(pop.outcomes(), (std::vector<double>{10, 20, 30}));
  EXPECT_EQ(pop.predictions(), (std::vector<double>{12, 18, 33}));
  EXPECT_EQ(pop.ids(), (std::vector<std::string>{"1", "2", "3"}));
}

TEST(Load, MalformedPredictionReportsRow) {
  try {
    parse("outcome,prediction\n10,12\n20,abc\n30,33\n");
    FAIL() << "expected MalformedValue";
  } catch (const RowError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedValue);
    EXPECT_EQ(e.row(), 2u);
  }
}

TEST(Load, LabeledColumn) {
  Schema s;
  s.labeled_col = "lab";
  const auto pop = parse("outcome,prediction,lab\n1,1,1\n2,,0\n3,3,true\n4,x,no\n5,5,yes\n", s);
  EXPECT_EQ(pop.size(), 5u);
  EXPECT_EQ(pop.size() - pop.labeled_count(), 2u);
  EXPECT_FALSE(pop.is_labeled(1));
  EXPECT_FALSE(pop.is_labeled(3));
  EXPECT_TRUE(std::isnan(pop.prediction(3)));
}

TEST(Load, Errors) {
  EXPECT_EQ(kind_of([] { parse("outcome,score\n1,2\n"); }), ErrorKind::MissingColumn);
  EXPECT_EQ(kind_of([] { parse("outcome,prediction\n"); }), ErrorKind::EmptyPopulation);
  EXPECT_EQ(kind_of([] { parse(""); }), ErrorKind::EmptyPopulation);
  EXPECT_EQ(kind_of([] { parse("outcome,prediction\n1,2,3\n"); }), ErrorKind::MalformedValue);
  Schema s;
  s.id_col = "id";
  EXPECT_EQ(kind_of([&] { parse("id,outcome,prediction\na,1,2\na,2,3\n", s); }), ErrorKind::MalformedValue);
  EXPECT_EQ(kind_of([] { parse("outcome,prediction\n1,inf\n"); }), ErrorKind::MalformedValue);
}

TEST(Load, TabsQuotesCovariatesAndGroups) {
  Schema s;
  s.group_cols = {"female"};
  s.missing = "NA";
  const auto pop = parse("\xEF\xBB\xBFoutcome\tprediction\tage\tlast_job\tfemale\n"
                         "1\t2\t40\t\"a, b\"\t1\n"
                         "\n"
                         "3\t4\t20\tNA\t0\n",
                         s);
  ASSERT_EQ(pop.size(), 2u);
  const auto r0 = pop.record(0);
  EXPECT_EQ(*r0.covariates.at("last_job"), "a, b");
  EXPECT_EQ(*r0.covariates.at("age"), "40");
  EXPECT_TRUE(r0.groups.count("female"));
  const auto r1 = pop.record(1);
  EXPECT_FALSE(r1.covariates.at("last_job").has_value());
  EXPECT_FALSE(r1.groups.count("female"));
}

TEST(Load, RoundTripIsBitExact) {
  SynthSpec spec = lognormal_fixture(3, 0.4);
  spec.n = 500;
  spec.covariates.enabled = true;
  Population pop = generate(spec);
  Flags lab(pop.size(), 1);
  for (std::size_t i = 0; i < lab.size(); i += 7) lab[i] = 0;
  pop = pop.with_labeled(lab);
  std::ostringstream out;
  write_population(out, pop);
  std::istringstream in(out.str());
  const auto back = load_population(in, round_trip_schema(pop));
  EXPECT_EQ(back.outcomes(), pop.outcomes());
  EXPECT_EQ(back.labeled(), pop.labeled());
  EXPECT_EQ(back.ids(), pop.ids());
  for (std::size_t i = 0; i < pop.size(); ++i)
    if (pop.is_labeled(i)) { EXPECT_EQ(back.prediction(i), pop.prediction(i)); }
  EXPECT_EQ(back.attributes().covariates, pop.attributes().covariates);
  EXPECT_EQ(back.attributes().groups, pop.attributes().groups);
}

TEST(Order, TopScoresAndTiesByRecordOrder) {
  PopulationColumns c;
  c.outcome = {0, 0, 0, 0, 0};
  c.prediction = {5, 7, 7, 1, 9};
  const Population pop(c);
  EXPECT_EQ(priority_order(pop, ScoreField::Prediction), (std::vector<std::size_t>{4, 1, 2, 0, 3}));
  const auto low = pop.with_direction(Direction::LowerIsRisk);
  EXPECT_EQ(priority_order(low, ScoreField::Prediction), (std::vector<std::size_t>{3, 0, 1, 2, 4}));
}

TEST(Order, UnlabeledRecordsAreNotRanked) {
  PopulationColumns c;
  c.outcome = {1, 2, 3};
  c.prediction = {3, 2, 1};
  c.labeled = {1, 0, 1};
  const Population pop(c);
  EXPECT_EQ(priority_order(pop, ScoreField::Prediction), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(priority_order(pop, ScoreField::Outcome), (std::vector<std::size_t>{2, 1, 0}));
}

namespace {

Population ranked(std::size_t n) {
  PopulationColumns c;
  for (std::size_t i = 0; i < n; ++i) {
    c.outcome.push_back(0.0);
    c.prediction.push_back(static_cast<double>(n - i));  // record i has rank i
  }
  return Population(c);
}

}  // namespace

TEST(Band, RankWindowAroundCutoff) {
  const auto pop = ranked(100);
  const auto m = prediction_band_mask(pop, RankBand{15, 0.10});
  EXPECT_EQ(m.count(), 10u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(m[i], i >= 10 && i < 20) << i;
}

TEST(Band, FullBandAndEdges) {
  PopulationColumns c;
  c.outcome = {1, 2, 3, 4, 5, 6};
  c.prediction = {1, 2, 3, 4, 5, 6};
  c.labeled = {1, 1, 0, 1, 1, 1};
  const Population pop(c);
  const auto all = prediction_band_mask(pop, RankBand{3, 1.0});
  EXPECT_EQ(all.member, pop.labeled());
  const auto top = prediction_band_mask(ranked(100), RankBand{0, 0.1});
  EXPECT_EQ(top.count(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_TRUE(top[i]);
  const auto bottom = prediction_band_mask(ranked(100), RankBand{100, 0.1});
  for (std::size_t i = 90; i < 100; ++i) EXPECT_TRUE(bottom[i]);
  EXPECT_EQ(kind_of([&] { prediction_band_mask(pop, RankBand{3, 0.0}); }), ErrorKind::InvalidBandwidth);
  EXPECT_EQ(kind_of([&] { prediction_band_mask(pop, RankBand{3, 1.5}); }), ErrorKind::InvalidBandwidth);
}

TEST(Band, ScoreMode) {
  PopulationColumns c;
  c.outcome = {0, 0, 0, 0};
  c.prediction = {1.0, 2.0, 2.5, 4.0};
  const Population pop(c);
  const auto m = prediction_band_mask(pop, ScoreBand{2.2, 0.5});
  EXPECT_EQ(m.member, (Flags{0, 1, 1, 0}));
  EXPECT_EQ(prediction_band_mask(pop, ScoreBand{2.2, 0.1}).count(), 0u);
  EXPECT_EQ(kind_of([&] { prediction_band_mask(pop, ScoreBand{2.2, 0.0}); }), ErrorKind::InvalidBandwidth);
}

TEST(Rmse, HandValues) {
  PopulationColumns c;
  c.outcome = {0, 0};
  c.prediction = {3, 4};
  EXPECT_DOUBLE_EQ(rmse(Population(c)), std::sqrt(12.5));
  PopulationColumns one;
  one.outcome = {10};
  one.prediction = {7};
  EXPECT_DOUBLE_EQ(rmse(Population(one)), 3.0);
  PopulationColumns same;
  same.outcome = {1, 2, 3};
  same.prediction = {1, 2, 3};
  EXPECT_EQ(rmse(Population(same)), 0.0);
}

TEST(Rmse, EmptySelection) {
  PopulationColumns c;
  c.outcome = {1, 2};
  c.prediction = {1, 2};
  c.labeled = {0, 1};
  const Population pop(c);
  EXPECT_EQ(kind_of([&] { rmse(pop, Mask::none(2)); }), ErrorKind::EmptyMask);
  EXPECT_EQ(kind_of([&] { rmse(pop, Mask{{1, 0}, ""}); }), ErrorKind::EmptyMask);
}

TEST(Rmse, UnionIsCountWeightedMeanOfSquares) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SynthSpec spec = two_point_fixture(seed, 50.0);
    spec.n = 300;
    const auto pop = generate(spec);
    SplitMix64 g(seed);
    Mask a = Mask::none(pop.size()), b = Mask::none(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) {
      const auto r = g.below(3);
      if (r == 0) a.member[i] = 1;
      if (r == 1) b.member[i] = 1;
    }
    const double ra = rmse(pop, a), rb = rmse(pop, b), ru = rmse(pop, a | b);
    const double na = static_cast<double>(a.count()), nb = static_cast<double>(b.count());
    EXPECT_NEAR(ru * ru, (na * ra * ra + nb * rb * rb) / (na + nb), 1e-9 * ru * ru);
  }
}

TEST(Population, InvariantsEnforced) {
  PopulationColumns c;
  c.outcome = {1, NAN};
  c.prediction = {1, 2};
  EXPECT_EQ(kind_of([&] { Population p(c); }), ErrorKind::MalformedValue);
  c.labeled = {1, 0};
  EXPECT_NO_THROW(Population p(c));
  PopulationColumns empty;
  EXPECT_EQ(kind_of([&] { Population p(empty); }), ErrorKind::EmptyPopulation);
}

TEST(Population, RevealingMissingPredictionFails) {
  PopulationColumns c;
  c.outcome = {1, 2};
  c.prediction = {1, NAN};
  c.labeled = {1, 0};
  const Population pop(c);
  EXPECT_EQ(kind_of([&] { pop.with_labeled({1, 1}); }), ErrorKind::MissingPrediction);
}
