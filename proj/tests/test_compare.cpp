#include <gtest/gtest.h>

#include <cmath>

#include "rvp/compare.hpp"
#include "rvp/oracle.hpp"
#include "rvp/predicate.hpp"
#include "rvp/synth.hpp"

using namespace rvp;

namespace {

UtilitySpec step(double beta, double b = 1.0, double h = 0.0) {
  PartitionedUtility p;
  p.threshold = QuantileThreshold{beta};
  p.at_risk_value = b;
  p.other_value = h == 0.0 ? 0.0 : -h;
  return {p};
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

Lever improvement(std::optional<Mask> m = std::nullopt, CostModel c = {}) {
  return {"improve", PredictionImprovement{0.0, std::move(m)}, std::move(c)};
}
Lever capacity(CostModel c = CostModel::linear(1.0)) { return {"capacity", ExpandCapacity{0.0, std::nullopt}, std::move(c)}; }

Scenario employment(std::uint64_t seed, double noise, UtilitySpec u, double alpha, std::size_t n = 2000) {
  SynthSpec s = two_point_fixture(seed, noise);
  s.n = n;
  return make_scenario(generate(s), std::move(u), alpha, {seed, false});
}

}  // namespace

TEST(Evaluate, PerfectPredictor) {
  const auto s = make_scenario(generate(two_point_fixture(7, 0.0)), step(0.15), 0.1);
  EXPECT_EQ(evaluate(s), 0.1);
  const auto sum = evaluate_summary(s);
  EXPECT_EQ(sum.random_baseline, 0.015);
  EXPECT_EQ(sum.perfect_baseline, 0.1);
  EXPECT_NEAR(*sum.ratio_to_random, 0.1 / 0.015, 1e-12);
  EXPECT_EQ(sum.slots, 1000u);
}

TEST(Evaluate, NoLabelsMatchesRandomInExpectation) {
  SynthSpec spec = two_point_fixture(7, 50.0);
  spec.n = 1000;
  auto pop = generate(spec);
  pop = pop.with_labeled(Flags(pop.size(), 0));
  double total = 0.0;
  const int reps = 400;
  double sq = 0.0;
  for (int r = 0; r < reps; ++r) {
    const double w = evaluate(make_scenario(pop, step(0.15), 0.1, {static_cast<std::uint64_t>(r), false}));
    total += w;
    sq += w * w;
  }
  const double mean = total / reps;
  const double se = std::sqrt((sq / reps - mean * mean) / reps);
  EXPECT_LT(std::fabs(mean - 0.015), 3.0 * se);
  const auto s = make_scenario(pop, step(0.15), 0.1, {3, false});
  EXPECT_EQ(evaluate(s), evaluate(s));
}

TEST(Evaluate, ZeroTransferIsZero) {
  const auto pop = generate(lognormal_fixture(2, 0.5));
  EXPECT_EQ(evaluate(make_scenario(pop, UtilitySpec{CrraUtility{3.0, 0.0}}, 0.2)), 0.0);
}

TEST(Gain, IdentityLever) {
  const auto s = employment(1, 200.0, step(0.15), 0.1);
  EXPECT_EQ(welfare_gain(s, improvement().at(0.0)), 0.0);
  EXPECT_EQ(welfare_gain(s, capacity().at(0.0)), 0.0);
}

TEST(Gain, CapacityUnderStepCannotLose) {
  // Enumerate every extra slot count on a 20-record fixture.
  SynthSpec spec = two_point_fixture(3, 150.0);
  spec.n = 20;
  const auto pop = generate(spec);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = make_scenario(pop, step(0.3), 0.1, {seed, false});
    for (int extra = 1; extra <= 18; ++extra) EXPECT_GE(welfare_gain(s, capacity().at(extra / 20.0)), 0.0);
  }
}

TEST(Gain, CapacityUnderHeavyHarmLoses) {
  SynthSpec spec = two_point_fixture(5, 700.0);
  spec.outcome = TwoPointOutcome{0.25, 0.0, 400.0};
  const auto pop = generate(spec);
  const auto harsh = make_scenario(pop, step(0.25, 1.0, 3.0), 0.01, {5, false});
  EXPECT_LT(welfare_gain(harsh, capacity().at(0.01)), 0.0);
  const auto mild = make_scenario(pop, step(0.25), 0.01, {5, false});
  EXPECT_GT(welfare_gain(mild, capacity().at(0.01)), 0.0);
}

TEST(Curve, UniformImprovementEndsAtPerfect) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = employment(seed, 300.0, step(0.15), 0.1);
    const auto c = welfare_curve(s, improvement(), {0.0, 0.5, 1.0});
    ASSERT_EQ(c.points.size(), 3u);
    EXPECT_EQ(*c.points[0].gain, 0.0);
    EXPECT_LE(*c.points[0].gain, *c.points[1].gain);
    EXPECT_LE(*c.points[1].gain, *c.points[2].gain);
    const auto u = resolve(s.utility, s.pop());
    const double oracle = perfect_baseline(s.pop(), s.constraint, u) - evaluate(s);
    EXPECT_NEAR(*c.points[2].gain, oracle, 1e-15);
  }
}

TEST(Curve, CapacityFamilyCrossesZero) {
  std::vector<double> end_gain;
  SynthSpec spec = two_point_fixture(9, 700.0);
  spec.outcome = TwoPointOutcome{0.25, 0.0, 400.0};
  const auto pop = generate(spec);
  for (double h : {0.0, 1.0, 2.0, 3.0}) {
    const auto s = make_scenario(pop, step(0.25, 1.0, h), 0.01, {9, false});
    const auto c = welfare_curve(s, capacity(), {0.0, 0.01, 0.02, 0.05});
    end_gain.push_back(*c.points.back().gain);
  }
  EXPECT_GT(end_gain.front(), 0.0);
  EXPECT_LT(end_gain.back(), 0.0);
  for (std::size_t i = 1; i < end_gain.size(); ++i) EXPECT_LT(end_gain[i], end_gain[i - 1]);
}

TEST(Curve, PointErrorsAreRecorded) {
  const auto s = employment(2, 100.0, step(0.15), 0.5);
  const auto c = welfare_curve(s, capacity(), {0.1, 0.4, 0.6});
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_TRUE(c.points[0].error.empty());
  EXPECT_TRUE(c.points[1].error.empty());
  EXPECT_FALSE(c.points[2].error.empty());
  EXPECT_FALSE(c.points[2].gain.has_value());
  EXPECT_EQ(kind_of([&] { welfare_curve(s, capacity(), {0.2, 0.1}); }), ErrorKind::InvalidGrid);
}

TEST(Monotone, UniformImprovementGainNondecreasing) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    SynthSpec spec = lognormal_fixture(seed, 0.6);
    spec.n = 1500;
    const auto pop = generate(spec);
    for (const UtilitySpec& u : {step(0.3), step(0.3, 1.0, 2.0), UtilitySpec{CrraUtility{2.0, 100.0}}}) {
      const auto s = make_scenario(pop, u, 0.1, {seed, false});
      const auto c = welfare_curve(s, improvement(), linear_grid(0.0, 1.0, 21));
      for (std::size_t i = 1; i < c.points.size(); ++i) EXPECT_GE(*c.points[i].gain, *c.points[i - 1].gain);
    }
  }
}

TEST(BreakEven, ZeroBenchmark) {
  const auto s = employment(4, 300.0, step(0.15), 0.1);
  const auto r = break_even(s, improvement(), linear_grid(0.0, 1.0, 11), capacity().at(0.0));
  EXPECT_TRUE(r.attained);
  EXPECT_EQ(*r.theta_star, 0.0);
  EXPECT_EQ(r.benchmark_gain, 0.0);
}

TEST(BreakEven, Unattainable) {
  const auto s = employment(4, 300.0, step(0.15), 0.1);
  const auto r = break_even(s, improvement(), linear_grid(0.0, 1.0, 11), capacity().at(0.5));
  EXPECT_FALSE(r.attained);
  EXPECT_FALSE(r.theta_star.has_value());
  EXPECT_EQ(r.gain_curve.size(), 11u);
}

TEST(BreakEven, MatchesFineScan) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthSpec spec = two_point_fixture(seed, 300.0);
    spec.n = 2000;
    spec.covariates.enabled = true;
    spec.covariates.hard_noise_factor = 2.0;
    const auto pop = generate(spec);
    const auto s = make_scenario(pop, step(0.15), 0.1, {seed, false});
    const Mask sub = covariate_mask(pop, "age > 35 AND last_job IS MISSING");
    const Lever imp = improvement(sub, CostModel::per_person(1.0, "hours"));
    const Lever bench = lever_for_spend(capacity(CostModel::per_person(4.0, "hours")), s, 0.5 * sub.count());
    const auto coarse = linear_grid(0.0, 1.0, 21);
    const auto r = break_even(s, imp, coarse, bench);
    const GainEvaluator ev(s);
    const double target = ev.gain(bench);
    const auto fine = oracle_scan([&](double eta) { return ev.gain(imp.at(eta)); }, linear_grid(0.0, 1.0, 201), target);
    ASSERT_EQ(r.attained, fine.has_value());
    if (fine) {
      EXPECT_GE(*r.theta_star, *fine - 1e-12);
      EXPECT_LE(*r.theta_star - *fine, 0.05 + 1e-12);
    }
    ASSERT_TRUE(r.rmse_parity_eta.has_value());
    EXPECT_GT(*r.rmse_parity_eta, 0.0);
  }
}

TEST(BreakEven, RequiresImprovementLever) {
  const auto s = employment(4, 300.0, step(0.15), 0.1);
  EXPECT_EQ(kind_of([&] { break_even(s, capacity(), {0.0, 1.0}, capacity()); }), ErrorKind::InvalidLever);
  EXPECT_EQ(kind_of([&] { break_even(s, improvement(), {0.0, 1.5}, capacity()); }), ErrorKind::InvalidGrid);
}

TEST(EquivalentCost, ZeroGainCostsNothing) {
  const auto s = employment(6, 300.0, step(0.15), 0.1);
  const auto r = equivalent_cost(s, improvement().at(0.0), capacity(CostModel::per_person(4.0)));
  EXPECT_EQ(r.lever_gain, 0.0);
  EXPECT_EQ(*r.theta_star, 0.0);
  EXPECT_EQ(*r.cost, 0.0);
}

TEST(EquivalentCost, AgreesWithLinearScan) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto s = employment(seed, 300.0, step(0.15), 0.1, 1000);
    const Lever bench = capacity(CostModel::per_person(4.0, "hours"));
    EquivalentCostOptions opt;
    opt.range_hi = 0.3;
    const Lever lever = improvement().at(0.4);
    const auto r = equivalent_cost(s, lever, bench, opt);
    ASSERT_TRUE(r.theta_star.has_value());
    const GainEvaluator ev(s);
    const auto grid = linear_grid(0.0, 0.3, 10001);
    const auto scan = oracle_scan([&](double t) { return ev.gain(bench.at(t)); }, grid, r.lever_gain);
    ASSERT_TRUE(scan.has_value());
    EXPECT_LE(std::fabs(*r.theta_star - *scan), grid[1] - grid[0]);
    EXPECT_GE(ev.gain(bench.at(*r.theta_star)), r.lever_gain);
    EXPECT_DOUBLE_EQ(*r.cost, lever_cost(bench.at(*r.theta_star), s));
  }
}

TEST(EquivalentCost, RangeExceededAndNonMonotone) {
  const auto s = employment(6, 300.0, step(0.15), 0.1);
  EquivalentCostOptions opt;
  opt.range_hi = 0.001;
  const auto r = equivalent_cost(s, improvement().at(1.0), capacity(), opt);
  EXPECT_TRUE(r.range_exceeded);
  EXPECT_FALSE(r.cost.has_value());
  // Under heavy harm extra capacity loses welfare, so the benchmark decreases.
  const auto harm = employment(6, 300.0, step(0.25, 1.0, 3.0), 0.01, 10000);
  EquivalentCostOptions wide;
  wide.range_hi = 0.5;
  EXPECT_EQ(kind_of([&] { equivalent_cost(harm, improvement().at(1.0), capacity(), wide); }),
            ErrorKind::NonMonotoneBenchmark);
  EXPECT_EQ(kind_of([&] { equivalent_cost(s, improvement().at(1.0), capacity(CostModel{})); }),
            ErrorKind::NonInvertibleCost);
}

TEST(Ratio, DiagonalIsOne) {
  const auto s = employment(2, 300.0, step(0.15), 0.1);
  const std::vector<double> g = {0.25, 0.5, 1.0};
  const auto r = ratio_grid(s, improvement(), g, improvement(), g);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(*r.ratios[i][i], 1.0);
  EXPECT_EQ(r.truncate_lo, 0.2);
  EXPECT_EQ(r.truncate_hi, 5.0);
}

TEST(Ratio, ValuesAndUndefinedColumn) {
  const auto s = employment(2, 300.0, step(0.15), 0.1);
  const auto r = ratio_grid(s, improvement(), {0.5, 1.0}, capacity(), {0.0, 0.05});
  ASSERT_EQ(r.ratios.size(), 2u);
  ASSERT_EQ(r.ratios[0].size(), 2u);
  EXPECT_FALSE(r.ratios[0][0].has_value());
  EXPECT_FALSE(r.ratios[1][0].has_value());
  ASSERT_GT(r.gains_b[1], 0.0);
  EXPECT_EQ(*r.ratios[1][1], r.gains_a[1] / r.gains_b[1]);
  // Reciprocity with the transposed grid.
  const auto t = ratio_grid(s, capacity(), {0.0, 0.05}, improvement(), {0.5, 1.0});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      if (r.ratios[i][j] && t.ratios[j][i]) { EXPECT_NEAR(*r.ratios[i][j] * *t.ratios[j][i], 1.0, 1e-12); }
}

TEST(Ratio, TwiceTheGain) {
  PopulationColumns c;
  c.outcome = {0, 0, 0, 0, 1, 1, 1, 1};
  c.prediction = {8, 7, 6, 5, 4, 3, 2, 1};
  const auto s = make_scenario(Population(c), step(0.5), 0.25);
  // Improvement moves both slots onto at-risk records; three extra slots reach one.
  const auto r = ratio_grid(s, improvement(), {1.0}, capacity(), {0.375});
  EXPECT_EQ(r.gains_a[0], 0.25);
  EXPECT_EQ(r.gains_b[0], 0.125);
  EXPECT_EQ(*r.ratios[0][0], 2.0);
}

TEST(Optimize, ZeroBudget) {
  const auto s = employment(1, 300.0, step(0.15), 0.1, 500);
  const Lever lab{"label", DataLabeling{0.0, {}}, CostModel::per_person(1.0)};
  const auto r = optimize_budget(s, {lab, capacity(CostModel::per_person(1.0))}, 0.0);
  for (const auto& sp : r.splits) EXPECT_EQ(sp.spend, 0.0);
  EXPECT_EQ(r.welfare_gain, 0.0);
}

TEST(Optimize, MatchesOracleOnToy) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    SynthSpec spec = two_point_fixture(seed, 200.0);
    spec.n = 100;
    spec.outcome = TwoPointOutcome{0.5, 0.0, 400.0};
    auto pop = generate(spec);
    pop = pop.with_labeled(Flags(pop.size(), 0));
    const auto s = make_scenario(pop, step(0.5), 0.05, {seed, false});
    const std::vector<Lever> levers = {{"label", DataLabeling{0.0, {}}, CostModel::per_person(1.0)},
                                       capacity(CostModel::per_person(1.0))};
    const auto opt = optimize_budget(s, levers, 40.0, 1.0);
    const auto ref = oracle_budget(s, levers, 40);
    EXPECT_EQ(opt.total_welfare, ref.total_welfare);
    ASSERT_EQ(opt.splits.size(), ref.splits.size());
    for (std::size_t j = 0; j < levers.size(); ++j) EXPECT_EQ(opt.splits[j].spend, ref.splits[j].spend);
    EXPECT_EQ(opt.cells.size(), 41u * 42u / 2u);
  }
}

TEST(Optimize, Errors) {
  const auto s = employment(1, 300.0, step(0.15), 0.1, 500);
  EXPECT_EQ(kind_of([&] { optimize_budget(s, {improvement()}, 10.0); }), ErrorKind::NonInvertibleCost);
  EXPECT_EQ(kind_of([&] { optimize_budget(s, {capacity()}, 10.0, 1e-9); }), ErrorKind::InvalidGrid);
  EXPECT_EQ(kind_of([&] { optimize_budget(s, {}, 10.0); }), ErrorKind::InvalidLever);
}

TEST(Parallel, ResultsIndependentOfWorkers) {
  const auto s = employment(3, 300.0, step(0.15, 1.0, 1.0), 0.1);
  const auto grid = linear_grid(0.0, 1.0, 17);
  const auto one = welfare_curve(s, improvement(), grid, 1);
  const auto four = welfare_curve(s, improvement(), grid, 4);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_EQ(*one.points[i].welfare, *four.points[i].welfare);
  const std::vector<Lever> levers = {{"label", DataLabeling{0.0, {}}, CostModel::per_person(1.0)},
                                     capacity(CostModel::per_person(1.0))};
  const auto a = optimize_budget(s, levers, 300.0, 10.0, 1);
  const auto b = optimize_budget(s, levers, 300.0, 10.0, 4);
  EXPECT_EQ(a.total_welfare, b.total_welfare);
  for (std::size_t c = 0; c < a.cells.size(); ++c) EXPECT_EQ(a.cells[c].welfare, b.cells[c].welfare);
}
