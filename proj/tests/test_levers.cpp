#include <gtest/gtest.h>

#include <cmath>

#include "rvp/compare.hpp"
#include "rvp/levers.hpp"
#include "rvp/rng.hpp"
#include "rvp/synth.hpp"

using namespace rvp;

namespace {

Population make(std::vector<double> w, std::vector<double> p, Flags labeled = {}) {
  PopulationColumns c;
  c.outcome = std::move(w);
  c.prediction = std::move(p);
  c.labeled = std::move(labeled);
  return Population(c);
}

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

Lever lever(std::string name, LeverAction a, CostModel c = {}) { return {std::move(name), std::move(a), std::move(c)}; }

}  // namespace

TEST(Improvement, Endpoints) {
  const auto pop = generate(two_point_fixture(3, 250.0));
  const auto all = Mask::all(pop.size());
  const auto full = apply_prediction_improvement(pop, 1.0, all);
  EXPECT_EQ(full.predictions(), pop.outcomes());
  const auto none = apply_prediction_improvement(pop, 0.0, all);
  EXPECT_EQ(none.predictions(), pop.predictions());
  EXPECT_EQ(none.outcomes(), pop.outcomes());
}

TEST(Improvement, QuarterStep) {
  const auto pop = make({20, 5}, {10, 5});
  const auto out = apply_prediction_improvement(pop, 0.25, Mask{{1, 0}, ""});
  EXPECT_EQ(out.prediction(0), 12.5);
  EXPECT_EQ(out.prediction(1), 5.0);
  EXPECT_EQ(out.outcomes(), pop.outcomes());
}

TEST(Improvement, UnlabeledInMask) {
  const auto pop = make({1, 2}, {1, 2}, {1, 0});
  EXPECT_EQ(kind_of([&] { apply_prediction_improvement(pop, 0.5, Mask::all(2)); }), ErrorKind::UnlabeledInMask);
  EXPECT_EQ(kind_of([&] { apply_prediction_improvement(pop, 1.5, Mask{{1, 0}, ""}); }), ErrorKind::InvalidLever);
}

TEST(Improvement, RmseScalesByOneMinusEta) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SynthSpec spec = lognormal_fixture(seed, 0.6);
    spec.n = 2000;
    const auto pop = generate(spec);
    SplitMix64 g(seed);
    Mask random = Mask::none(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) random.member[i] = g.uniform() < 0.3;
    for (const Mask& m : {Mask::all(pop.size()), random, prediction_band_mask(pop, RankBand{200, 0.1})}) {
      const double before = rmse(pop, m);
      for (double eta = 0.0; eta <= 1.0; eta += 0.05) {
        const double after = rmse(apply_prediction_improvement(pop, eta, m), m);
        EXPECT_NEAR(after, (1.0 - eta) * before, 1e-12 * before) << eta;
      }
    }
  }
}

TEST(Improvement, Composition) {
  const auto pop = generate(lognormal_fixture(8, 0.5));
  const auto m = Mask::all(pop.size());
  SplitMix64 g(5);
  for (int t = 0; t < 20; ++t) {
    const double e1 = g.uniform(), e2 = g.uniform();
    const auto twice = apply_prediction_improvement(apply_prediction_improvement(pop, e1, m), e2, m);
    const auto once = apply_prediction_improvement(pop, e1 + e2 - e1 * e2, m);
    for (std::size_t i = 0; i < pop.size(); i += 37)
      EXPECT_NEAR(twice.prediction(i), once.prediction(i), 1e-12 * std::fabs(once.prediction(i)));
  }
}

TEST(Improvement, PairOrderFlipsAtMostOnce) {
  SynthSpec spec = two_point_fixture(12, 300.0);
  spec.n = 60;
  spec.outcome = LognormalOutcome{5.0, 1.0};
  const auto pop = generate(spec);
  const auto m = Mask::all(pop.size());
  std::vector<Population> path;
  for (int t = 0; t <= 200; ++t) path.push_back(apply_prediction_improvement(pop, t / 200.0, m));
  for (std::size_t i = 0; i < pop.size(); ++i) {
    for (std::size_t j = i + 1; j < pop.size(); ++j) {
      int flips = 0;
      int prev = 0;
      for (const auto& p : path) {
        const double d = p.prediction(i) - p.prediction(j);
        const int sign = d > 0 ? 1 : (d < 0 ? -1 : 0);
        if (sign != 0 && prev != 0 && sign != prev) ++flips;
        if (sign != 0) prev = sign;
      }
      EXPECT_LE(flips, 1);
      const double dw = pop.outcome(i) - pop.outcome(j);
      if (dw != 0.0) { EXPECT_EQ(prev, dw > 0 ? 1 : -1); }
    }
  }
}

TEST(Levers, NonMutating) {
  const auto pop = generate(two_point_fixture(4, 200.0));
  const auto copy = pop;
  Scenario s = make_scenario(pop, step(0.15, 1.0, 2.0), 0.15);
  const Scenario before = s;
  const std::vector<Lever> all = {
      lever("imp", PredictionImprovement{0.5, std::nullopt}),
      lever("cap", ExpandCapacity{0.05, std::nullopt}),
      lever("local", ExpandCapacity{0.1, Mask::all(pop.size())}),
      lever("ben", Benefit{2.0}),
      lever("harm", HarmReduction{1.0}),
      lever("lab", DataLabeling{0.4, {}}),
  };
  for (const auto& l : all) {
    const Scenario out = apply_lever(s, l);
    EXPECT_EQ(s.pop().predictions(), before.pop().predictions());
    EXPECT_EQ(s.pop().labeled(), before.pop().labeled());
    EXPECT_EQ(s.constraint, before.constraint);
    EXPECT_EQ(s.utility, before.utility);
    (void)out;
  }
  EXPECT_EQ(pop.predictions(), copy.predictions());
}

TEST(Capacity, Addition) {
  Constraint c;
  c.capacity = 0.15;
  c.population_size = 10000;
  EXPECT_DOUBLE_EQ(apply_capacity(c, 0.05).capacity, 0.2);
  EXPECT_EQ(apply_capacity(c, 0.05).subgroup_caps, c.subgroup_caps);
  c.capacity = 0.99;
  EXPECT_EQ(kind_of([&] { apply_capacity(c, 0.02); }), ErrorKind::CapacityOverflow);
  EXPECT_EQ(kind_of([&] { apply_capacity(c, -0.01); }), ErrorKind::InvalidLever);
}

TEST(Capacity, HoursBuySlots) {
  const auto pop = generate(two_point_fixture(7, 300.0));
  const Scenario s = make_scenario(pop, step(0.15), 0.15);
  const Lever tmpl = lever("cap", ExpandCapacity{0.0, std::nullopt}, CostModel::per_person(4.0, "hours"));
  const Lever l = lever_for_spend(tmpl, s, 1000.0);
  EXPECT_NEAR(l.theta(), 0.025, 1e-15);
  EXPECT_EQ(apply_lever(s, l).constraint.slots(), 1750u);
  EXPECT_DOUBLE_EQ(lever_cost(tmpl.at(0.025), s), 1000.0);
  EXPECT_EQ(lever_cost(tmpl.at(0.0), s), 0.0);
}

TEST(Capacity, LocalSlots) {
  Constraint c;
  c.capacity = 0.1;
  c.population_size = 4;
  const Mask m{{1, 1, 0, 0}, "g"};
  const auto out = apply_capacity(apply_capacity(c, 0.5, m), 0.5, m);
  ASSERT_EQ(out.reserved.size(), 1u);
  EXPECT_EQ(out.reserved[0].capacity, 1.0);
  EXPECT_EQ(kind_of([&] { apply_capacity(out, 0.1, m); }), ErrorKind::CapacityOverflow);
}

TEST(Benefit, Crra) {
  const auto pop = make({100, 200}, {100, 200});
  UtilitySpec u{CrraUtility{2.0, 100.0}};
  const auto more = apply_benefit(u, 150.0);
  EXPECT_GT(net_gain(resolve(more, pop), 100.0), net_gain(resolve(u, pop), 100.0));
  EXPECT_EQ(net_gain(resolve(apply_benefit(u, 0.0), pop), 100.0), 0.0);
  EXPECT_EQ(kind_of([&] { apply_benefit(UtilitySpec{AffineUtility{1, 0}}, 1.0); }), ErrorKind::VariantMismatch);
}

TEST(Benefit, PartitionedHalvesRatio) {
  const auto u = apply_benefit(step(0.5, 1.0, 2.0), 2.0);
  const auto& p = std::get<PartitionedUtility>(u.kind);
  EXPECT_EQ(p.at_risk_value, 2.0);
  EXPECT_EQ(p.harm_ratio(), 1.0);
  const auto zero = apply_benefit(step(0.5, 1.0, 2.0), 0.0);
  const auto pop = make({1, 2, 3, 4}, {1, 2, 3, 4});
  const auto r = resolve(zero, pop);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_LE(record_net_gain(r, pop, i), 0.0);
}

TEST(Harm, Reduction) {
  const auto u = step(0.5, 1.0, 2.0);
  const auto half = apply_harm_reduction(u, 1.0);
  EXPECT_EQ(std::get<PartitionedUtility>(half.kind).other_value, -1.0);
  EXPECT_EQ(std::get<PartitionedUtility>(half.kind).at_risk_value, 1.0);
  EXPECT_EQ(apply_harm_reduction(u, 0.0), step(0.5));
  EXPECT_EQ(apply_harm_reduction(u, 2.0), u);
  EXPECT_EQ(kind_of([&] { apply_harm_reduction(UtilitySpec{CrraUtility{2, 1}}, 1.0); }), ErrorKind::VariantMismatch);
}

TEST(Labeling, ExactCountAndDeterminism) {
  const auto pop = generate(two_point_fixture(2, 300.0));
  for (double share : {0.0, 0.2, 0.333, 0.5, 1.0}) {
    const auto out = apply_labeling(pop, share, {LabelingOrder::Kind::Random, 9, std::nullopt});
    EXPECT_EQ(out.labeled_count(), count_floor(share, pop.size()));
    EXPECT_EQ(apply_labeling(pop, share, {LabelingOrder::Kind::Random, 9, std::nullopt}).labeled(), out.labeled());
  }
  EXPECT_EQ(apply_labeling(pop, 1.0, {}).labeled(), pop.labeled());
}

TEST(Labeling, NestedSharesAndMaskPriority) {
  const auto pop = generate(two_point_fixture(2, 300.0));
  const LabelingOrder order{LabelingOrder::Kind::Random, 4, std::nullopt};
  const auto small = apply_labeling(pop, 0.2, order);
  const auto large = apply_labeling(pop, 0.6, order);
  for (std::size_t i = 0; i < pop.size(); ++i)
    if (small.is_labeled(i)) { EXPECT_TRUE(large.is_labeled(i)); }
  Mask first = Mask::none(pop.size());
  for (std::size_t i = 0; i < 1000; ++i) first.member[i] = 1;
  const auto by_mask = apply_labeling(pop, 0.05, {LabelingOrder::Kind::ByMask, 4, first});
  for (std::size_t i = 0; i < pop.size(); ++i)
    if (by_mask.is_labeled(i)) { EXPECT_LT(i, 1000u); }
  EXPECT_EQ(by_mask.labeled_count(), 500u);
}

TEST(Labeling, Costs) {
  const auto pop = generate(two_point_fixture(2, 300.0));
  const auto half = apply_labeling(pop, 0.5, {});
  const Scenario s = make_scenario(half, step(0.15), 0.1);
  const Lever lab = lever("lab", DataLabeling{0.8, {}}, CostModel::per_person(13.0, "USD PPP"));
  EXPECT_EQ(lever_cost(lab, s), 39000.0);
  EXPECT_EQ(lever_cost(lab.at(0.5), s), 0.0);
  // National survey scale: 20% of 27.3 million households at $13.
  const double households = 27.3e6;
  EXPECT_NEAR(0.2 * households * 13.0, 70.98e6, 1.0);
  PopulationColumns c;
  c.outcome.assign(1000, 1.0);
  c.prediction.assign(1000, 1.0);
  c.labeled.assign(1000, 0);
  const Scenario tiny = make_scenario(Population(c), step(0.5), 0.1);
  EXPECT_DOUBLE_EQ(lever_cost(lab.at(0.2), tiny), 0.2 * 1000 * 13.0);
}

TEST(Cost, TableInterpolationAndRange) {
  const auto pop = generate(two_point_fixture(2, 300.0));
  const Scenario s = make_scenario(pop, step(0.15), 0.1);
  const Lever imp = lever("imp", PredictionImprovement{0.0, std::nullopt},
                          CostModel::tabulated({{0.0, 0.0}, {0.5, 100.0}, {1.0, 400.0}}));
  EXPECT_EQ(lever_cost(imp.at(0.0), s), 0.0);
  EXPECT_DOUBLE_EQ(lever_cost(imp.at(0.25), s), 50.0);
  EXPECT_DOUBLE_EQ(lever_cost(imp.at(0.75), s), 250.0);
  EXPECT_DOUBLE_EQ(lever_for_spend(imp, s, 250.0).theta(), 0.75);
  EXPECT_EQ(lever_for_spend(imp, s, 1e9).theta(), 1.0);
  const Lever cap = lever("cap", ExpandCapacity{0.0, std::nullopt}, CostModel::tabulated({{0.0, 0.0}, {0.1, 10.0}}));
  EXPECT_EQ(kind_of([&] { lever_cost(cap.at(0.2), s); }), ErrorKind::CostOutOfRange);
  const Lever bad = lever("bad", ExpandCapacity{0.0, std::nullopt}, CostModel::tabulated({{0.1, 0.0}, {0.2, 1.0}}));
  EXPECT_EQ(kind_of([&] { lever_cost(bad, s); }), ErrorKind::InvalidLever);
  EXPECT_EQ(kind_of([&] { lever_cost(lever("free", Benefit{2.0}), s); }), ErrorKind::NonInvertibleCost);
}

TEST(Cost, LinearAndMonotone) {
  const auto pop = generate(two_point_fixture(2, 300.0));
  const Scenario s = make_scenario(pop, step(0.15, 1.0, 2.0), 0.1);
  const Lever harm = lever("harm", HarmReduction{2.0}, CostModel::linear(500.0));
  EXPECT_EQ(lever_cost(harm, s), 0.0);
  EXPECT_DOUBLE_EQ(lever_cost(harm.at(1.0), s), 500.0);
  double prev = -1.0;
  for (double r = 2.0; r >= 0.0; r -= 0.25) {
    const double c = lever_cost(harm.at(r), s);
    EXPECT_GE(c, prev);
    prev = c;
  }
  EXPECT_DOUBLE_EQ(lever_for_spend(harm, s, 250.0).theta(), 1.5);
  const Lever per = lever("ben", Benefit{1.0}, CostModel::per_person(1.0));
  // Per recipient and currency unit: 1000 slots times a raise of 2.
  EXPECT_DOUBLE_EQ(lever_cost(per.at(3.0), s), 2000.0);
  EXPECT_DOUBLE_EQ(lever_for_spend(per, s, 2000.0).theta(), 3.0);
}

TEST(Scenario, JointApplicationOrder) {
  const auto pop = generate(two_point_fixture(5, 300.0));
  const Scenario s = make_scenario(pop.with_labeled(Flags(pop.size(), 1)), step(0.15), 0.1);
  // Improvement applies after labeling regardless of listing order.
  const std::vector<Lever> a = {lever("imp", PredictionImprovement{1.0, std::nullopt}), lever("lab", DataLabeling{0.5, {}})};
  const std::vector<Lever> b = {a[1], a[0]};
  EXPECT_EQ(apply_levers(s, a).pop().predictions(), apply_levers(s, b).pop().predictions());
  EXPECT_EQ(apply_levers(s, a).pop().labeled(), apply_levers(s, b).pop().labeled());
}
