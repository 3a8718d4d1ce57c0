#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "rvp/compare.hpp"
#include "rvp/error.hpp"
#include "rvp/levers.hpp"

namespace rvp {

/// Enumeration bound for oracle_budget.
inline constexpr double kOracleMaxCells = 1e6;

namespace detail {

// Reference spend-to-magnitude conversion, written out case by case.
inline double oracle_theta(const Lever& l, const Scenario& s, double spend) {
  const auto& c = l.cost;
  const double n = static_cast<double>(s.pop().size());
  const double k = static_cast<double>(s.constraint.slots());
  double inc = 0.0;
  if (c.kind == CostModel::Kind::Linear) {
    inc = spend / c.unit_cost;
  } else if (c.kind == CostModel::Kind::Table) {
    // Walk the segments; the last one whose start cost is affordable decides.
    inc = 0.0;
    for (std::size_t i = 0; i + 1 < c.table.size(); ++i) {
      const auto [x0, c0] = c.table[i];
      const auto [x1, c1] = c.table[i + 1];
      if (spend >= c1) inc = x1;
      else if (spend >= c0) inc = std::max(inc, c1 > c0 ? x0 + (x1 - x0) * (spend - c0) / (c1 - c0) : x1);
    }
  }
  const double units = c.kind == CostModel::Kind::PerPerson ? std::floor(spend / c.unit_cost + 1e-9) : 0.0;
  const bool pp = c.kind == CostModel::Kind::PerPerson;

  if (const auto* imp = std::get_if<PredictionImprovement>(&l.action)) {
    (void)imp;
    if (pp) fail(ErrorKind::NonInvertibleCost, "per-person improvement cost");
    return std::min(1.0, inc);
  }
  if (const auto* cap = std::get_if<ExpandCapacity>(&l.action)) {
    if (cap->target) {
      double before = 0.0;
      for (const auto& r : s.constraint.reserved)
        if (r.mask.member == cap->target->member) before = r.capacity;
      const double members = static_cast<double>(cap->target->count());
      if (!pp) return std::min(1.0 - before, inc);
      if (members == 0.0) return 0.0;
      const double have = std::floor(before * members + 1e-9);
      const double slots = std::min(members, have + units);
      return std::max(0.0, slots / members - before);
    }
    const double alpha = s.constraint.capacity;
    if (!pp) return std::min(1.0 - alpha, inc);
    const double slots = std::min(n, k + units);
    return std::max(0.0, slots / n - alpha);
  }
  if (std::holds_alternative<DataLabeling>(l.action)) {
    const double have = static_cast<double>(s.pop().labeled_count());
    if (!pp) return std::min(1.0, have / n + inc);
    return std::min(1.0, (have + units) / n);
  }
  if (std::holds_alternative<Benefit>(l.action)) {
    double old = 0.0;
    if (const auto* cr = std::get_if<CrraUtility>(&s.utility.kind)) old = cr->benefit;
    else old = std::get<PartitionedUtility>(s.utility.kind).at_risk_value;
    return old + (pp ? spend / (c.unit_cost * k) : inc);
  }
  const auto& p = std::get<PartitionedUtility>(s.utility.kind);
  const double ratio = p.at_risk_value != 0.0 ? -p.other_value / p.at_risk_value : 0.0;
  return std::max(0.0, ratio - (pp ? spend / (c.unit_cost * k) : inc));
}

}  // namespace detail

/// Brute-force budget optimum over every integer spend vector with sum at
/// most `budget`. Ties keep the first split met in lexicographic order.
inline BudgetAllocationResult oracle_budget(const Scenario& s, const std::vector<Lever>& levers, long budget) {
  require(!levers.empty(), ErrorKind::InvalidLever, "oracle needs at least one lever");
  require(budget >= 0, ErrorKind::InvalidGrid, "budget must be nonnegative");
  double cells = 1.0;
  for (std::size_t j = 1; j <= levers.size(); ++j)
    cells *= static_cast<double>(budget + static_cast<long>(j)) / static_cast<double>(j);
  if (cells > kOracleMaxCells)
    fail(ErrorKind::TooLargeToEnumerate, format_double(cells) + " cells exceed the enumeration bound");
  for (const auto& l : levers)
    require(l.cost.kind != CostModel::Kind::None && (l.cost.kind == CostModel::Kind::Table || l.cost.unit_cost > 0.0),
            ErrorKind::NonInvertibleCost, "lever '" + l.name + "' has no usable cost model");

  const GainEvaluator ev(s);
  BudgetAllocationResult best;
  best.budget = static_cast<double>(budget);
  best.resolution = 1.0;
  best.baseline_welfare = ev.baseline();
  bool have = false;
  std::vector<long> spend(levers.size(), 0);

  std::function<void(std::size_t, long)> rec = [&](std::size_t j, long left) {
    if (j == levers.size()) {
      std::vector<Lever> applied;
      std::vector<double> thetas;
      for (std::size_t q = 0; q < levers.size(); ++q) {
        thetas.push_back(detail::oracle_theta(levers[q], s, static_cast<double>(spend[q])));
        applied.push_back(levers[q].at(thetas.back()));
      }
      const double w = ev.welfare_with(applied);
      if (!have || w > best.total_welfare) {
        have = true;
        best.total_welfare = w;
        best.splits.clear();
        for (std::size_t q = 0; q < levers.size(); ++q)
          best.splits.push_back({levers[q].name, static_cast<double>(spend[q]), thetas[q]});
      }
      return;
    }
    for (long x = 0; x <= left; ++x) {
      spend[j] = x;
      rec(j + 1, left - x);
    }
    spend[j] = 0;
  };
  rec(0, budget);
  best.welfare_gain = best.total_welfare - best.baseline_welfare;
  return best;
}

/// First grid point whose gain reaches `target`; nullopt when none does.
inline std::optional<double> oracle_scan(const std::function<double(double)>& gain, const std::vector<double>& grid,
                                         double target) {
  for (double theta : grid)
    if (gain(theta) >= target) return theta;
  return std::nullopt;
}

}  // namespace rvp
