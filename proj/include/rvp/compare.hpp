#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rvp/error.hpp"
#include "rvp/levers.hpp"
#include "rvp/parallel.hpp"
#include "rvp/policy.hpp"
#include "rvp/utility.hpp"

namespace rvp {

// Outcomes are never changed by a lever, so a resolution computed on the base
// population can be reused for every derived scenario whose threshold
// definition is unchanged.
inline ResolvedUtility rebind(const ResolvedUtility& base, const UtilitySpec& spec, const Population& pop) {
  const auto* a = std::get_if<PartitionedUtility>(&base.spec.kind);
  const auto* b = std::get_if<PartitionedUtility>(&spec.kind);
  if (a && b && a->threshold == b->threshold && a->risk_side == b->risk_side && base.at_risk.size() == pop.size()) {
    validate(spec);
    ResolvedUtility r = base;
    r.spec = spec;
    return r;
  }
  if (!a && !b && base.spec.kind.index() == spec.kind.index()) {
    validate(spec);
    ResolvedUtility r = base;
    r.spec = spec;
    return r;
  }
  return resolve(spec, pop);
}

inline double evaluate_resolved(const Scenario& s, const ResolvedUtility& u) {
  const Allocation a = allocate(s.pop(), s.constraint, ScoreField::Prediction, s.policy.seed,
                                s.policy.stop_at_nonpositive ? &u : nullptr);
  return welfare(s.pop(), a, u);
}

/// Per-capita welfare of the prediction-ranked policy.
inline double evaluate(const Scenario& s) { return evaluate_resolved(s, resolve(s.utility, s.pop())); }

struct EvaluationSummary {
  double welfare = 0.0;
  double random_baseline = 0.0;
  double perfect_baseline = 0.0;
  std::optional<double> ratio_to_random;  // unset when the random baseline is zero
  std::size_t slots = 0;
  std::size_t slots_used = 0;
  std::size_t random_fill = 0;
  double label_share = 1.0;
  double resolved_threshold = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;
};

inline EvaluationSummary evaluate_summary(const Scenario& s) {
  const ResolvedUtility u = resolve(s.utility, s.pop());
  const Allocation a = allocate(s.pop(), s.constraint, ScoreField::Prediction, s.policy.seed,
                                s.policy.stop_at_nonpositive ? &u : nullptr);
  EvaluationSummary out;
  out.welfare = welfare(s.pop(), a, u);
  out.random_baseline = random_baseline(s.pop(), s.constraint, u);
  out.perfect_baseline = perfect_baseline(s.pop(), s.constraint, u);
  if (out.random_baseline != 0.0) out.ratio_to_random = welfare_ratio(out.welfare, out.random_baseline);
  out.slots = s.constraint.slots();
  out.slots_used = a.slots_used;
  out.random_fill = a.fill.count;
  out.label_share = s.pop().label_share();
  out.resolved_threshold = u.threshold;
  out.warnings = a.warnings;
  return out;
}

/// Frozen baseline for a whole analysis: every gain is measured against the
/// same evaluation of the unmodified scenario.
class GainEvaluator {
 public:
  explicit GainEvaluator(Scenario s) : base_(std::move(s)), utility_(resolve(base_.utility, base_.pop())) {
    baseline_ = evaluate_resolved(base_, utility_);
  }

  const Scenario& scenario() const { return base_; }
  double baseline() const { return baseline_; }

  double welfare_of(const Scenario& modified) const {
    return evaluate_resolved(modified, rebind(utility_, modified.utility, modified.pop()));
  }
  double welfare_with(const Lever& lever) const { return welfare_of(apply_lever(base_, lever)); }
  double welfare_with(const std::vector<Lever>& levers) const { return welfare_of(apply_levers(base_, levers)); }
  double gain(const Lever& lever) const { return welfare_with(lever) - baseline_; }

 private:
  Scenario base_;
  ResolvedUtility utility_;
  double baseline_ = 0.0;
};

/// evaluate(apply(lever, s)) - evaluate(s).
inline double welfare_gain(const Scenario& s, const Lever& lever) { return GainEvaluator(s).gain(lever); }

inline void require_sorted_grid(const std::vector<double>& grid, const std::string& what) {
  require(!grid.empty(), ErrorKind::InvalidGrid, what + " grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    require(std::isfinite(grid[i]), ErrorKind::InvalidGrid, what + " grid has a non-finite value");
    if (i > 0) require(grid[i] >= grid[i - 1], ErrorKind::InvalidGrid, what + " grid must be sorted ascending");
  }
}

inline std::vector<double> linear_grid(double start, double stop, std::size_t points) {
  require(points >= 1, ErrorKind::InvalidGrid, "grid needs at least one point");
  std::vector<double> g(points);
  if (points == 1) {
    g[0] = start;
    return g;
  }
  for (std::size_t i = 0; i < points; ++i) {
    // Endpoints exact.
    g[i] = i + 1 == points ? stop : start + (stop - start) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Welfare curves

struct CurvePoint {
  double theta = 0.0;
  std::optional<double> welfare;
  std::optional<double> gain;
  std::string error;  // set when this grid point failed; the sweep continues
};

struct WelfareCurve {
  std::string lever;
  double baseline_welfare = 0.0;
  std::vector<CurvePoint> points;
};

inline WelfareCurve welfare_curve(const Scenario& s, const Lever& family, const std::vector<double>& grid,
                                  std::size_t workers = 1) {
  require_sorted_grid(grid, "curve");
  const GainEvaluator ev(s);
  WelfareCurve out;
  out.lever = family.name;
  out.baseline_welfare = ev.baseline();
  out.points = parallel_map(grid.size(), workers, [&](std::size_t i) {
    CurvePoint p;
    p.theta = grid[i];
    try {
      const double w = ev.welfare_with(family.at(grid[i]));
      p.welfare = w;
      p.gain = w - ev.baseline();
    } catch (const Error& e) {
      p.error = e.what();
    }
    return p;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Break-even improvement

struct BreakEvenResult {
  std::optional<double> theta_star;  // smallest grid eta whose gain reaches the benchmark
  bool attained = false;
  double benchmark_gain = 0.0;
  double benchmark_theta = 0.0;
  std::optional<double> benchmark_cost;
  double baseline_welfare = 0.0;
  std::vector<CurvePoint> gain_curve;
  // eta at which the masked RMSE falls to the population RMSE.
  std::optional<double> rmse_parity_eta;
};

/// Benchmark sized to the improvement's own cost: the spend that the
/// improvement at full strength would cost, converted into the benchmark
/// lever through its cost model.
inline Lever benchmark_at_matched_cost(const Scenario& s, const Lever& improvement, const Lever& benchmark) {
  const double spend = lever_cost(improvement.at(1.0), s);
  return lever_for_spend(benchmark, s, spend);
}

inline BreakEvenResult break_even(const Scenario& s, const Lever& improvement, const std::vector<double>& eta_grid,
                                  const Lever& benchmark, std::size_t workers = 1) {
  require(std::holds_alternative<PredictionImprovement>(improvement.action), ErrorKind::InvalidLever,
          "break-even sweeps a prediction improvement lever");
  require_sorted_grid(eta_grid, "eta");
  require(eta_grid.front() >= 0.0 && eta_grid.back() <= 1.0, ErrorKind::InvalidGrid, "eta grid must lie in [0, 1]");
  const GainEvaluator ev(s);
  BreakEvenResult out;
  out.baseline_welfare = ev.baseline();
  out.benchmark_theta = benchmark.theta();
  out.benchmark_gain = ev.gain(benchmark);
  if (benchmark.cost.kind != CostModel::Kind::None) out.benchmark_cost = lever_cost(benchmark, s);

  const auto gains = parallel_map(eta_grid.size(), workers, [&](std::size_t i) {
    return ev.welfare_with(improvement.at(eta_grid[i]));
  });
  // First crossing; gains under a subgroup mask need not be monotone.
  for (std::size_t i = 0; i < eta_grid.size(); ++i) {
    CurvePoint p;
    p.theta = eta_grid[i];
    p.welfare = gains[i];
    p.gain = gains[i] - ev.baseline();
    if (!out.attained && *p.gain >= out.benchmark_gain) {
      out.attained = true;
      out.theta_star = eta_grid[i];
    }
    out.gain_curve.push_back(p);
  }

  const auto& imp = std::get<PredictionImprovement>(improvement.action);
  if (imp.mask) {
    const Mask sub = detail::improvement_mask(s.pop(), imp);
    if (sub.count() > 0) {
      const double r_sub = rmse(s.pop(), sub);
      const double r_all = rmse(s.pop(), s.pop().labeled_mask());
      out.rmse_parity_eta = r_sub > 0.0 ? std::max(0.0, 1.0 - r_all / r_sub) : 0.0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Equivalent cost

struct EquivalentCostResult {
  double lever_gain = 0.0;
  std::optional<double> theta_star;  // benchmark magnitude matching the lever's gain
  std::optional<double> cost;        // cost of that benchmark magnitude
  bool range_exceeded = false;
  double benchmark_max_gain = 0.0;
  double range_lo = 0.0;
  double range_hi = 0.0;
  std::size_t iterations = 0;
};

struct EquivalentCostOptions {
  std::optional<double> range_lo;  // default 0
  std::optional<double> range_hi;  // default: the lever's upper bound
  std::size_t validation_samples = 33;
  double relative_tolerance = 1e-6;
};

/// Smallest benchmark magnitude whose gain reaches the lever's gain, found by
/// bisection after checking on a sample grid that the benchmark's gain is
/// nondecreasing.
inline EquivalentCostResult equivalent_cost(const Scenario& s, const Lever& lever, const Lever& benchmark,
                                            const EquivalentCostOptions& opt = {}, std::size_t workers = 1) {
  require(benchmark.cost.kind != CostModel::Kind::None, ErrorKind::NonInvertibleCost,
          "benchmark lever '" + benchmark.name + "' needs a cost model");
  const GainEvaluator ev(s);
  EquivalentCostResult out;
  out.range_lo = opt.range_lo.value_or(0.0);
  out.range_hi = opt.range_hi.value_or(theta_upper_bound(benchmark, s));
  require(std::isfinite(out.range_hi) && out.range_hi > out.range_lo, ErrorKind::InvalidGrid,
          "benchmark range must be finite and nonempty");
  out.lever_gain = ev.gain(lever);

  auto gain_at = [&](double theta) { return ev.gain(benchmark.at(theta)); };

  const std::size_t m = std::max<std::size_t>(2, opt.validation_samples);
  const auto grid = linear_grid(out.range_lo, out.range_hi, m);
  const auto sampled = parallel_map(m, workers, [&](std::size_t i) { return gain_at(grid[i]); });
  for (std::size_t i = 1; i < m; ++i)
    if (sampled[i] < sampled[i - 1])
      fail(ErrorKind::NonMonotoneBenchmark, "benchmark gain decreases between " + format_double(grid[i - 1]) +
                                                " and " + format_double(grid[i]));
  out.benchmark_max_gain = sampled.back();

  if (out.lever_gain <= sampled.front()) {
    out.theta_star = out.range_lo;
    out.cost = lever_cost(benchmark.at(out.range_lo), s);
    return out;
  }
  if (out.lever_gain > out.benchmark_max_gain) {
    out.range_exceeded = true;
    return out;
  }
  // Bracket from the samples, then bisect: gain(lo) < target <= gain(hi).
  std::size_t j = 1;
  while (sampled[j] < out.lever_gain) ++j;
  double lo = grid[j - 1], hi = grid[j];
  while (hi - lo > opt.relative_tolerance * std::max(std::fabs(hi), 1e-300)) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    if (gain_at(mid) >= out.lever_gain)
      hi = mid;
    else
      lo = mid;
    ++out.iterations;
  }
  out.theta_star = hi;
  out.cost = lever_cost(benchmark.at(hi), s);
  return out;
}

// ---------------------------------------------------------------------------
// Ratio grid

struct RatioGrid {
  std::string lever_a, lever_b;
  std::vector<double> axis_a, axis_b;
  std::vector<double> gains_a, gains_b;
  // ratios[i][j] = gain_a[i] / gain_b[j]; nullopt where gain_b[j] <= 0.
  std::vector<std::vector<std::optional<double>>> ratios;
  double truncate_lo = 0.2;
  double truncate_hi = 5.0;
};

inline RatioGrid ratio_grid(const Scenario& s, const Lever& a, const std::vector<double>& grid_a, const Lever& b,
                            const std::vector<double>& grid_b, std::size_t workers = 1) {
  require(!grid_a.empty() && !grid_b.empty(), ErrorKind::InvalidGrid, "ratio grid axes must be nonempty");
  const GainEvaluator ev(s);
  RatioGrid out;
  out.lever_a = a.name;
  out.lever_b = b.name;
  out.axis_a = grid_a;
  out.axis_b = grid_b;
  const std::size_t na = grid_a.size();
  const auto gains = parallel_map(na + grid_b.size(), workers, [&](std::size_t i) {
    return i < na ? ev.gain(a.at(grid_a[i])) : ev.gain(b.at(grid_b[i - na]));
  });
  out.gains_a.assign(gains.begin(), gains.begin() + static_cast<std::ptrdiff_t>(na));
  out.gains_b.assign(gains.begin() + static_cast<std::ptrdiff_t>(na), gains.end());
  out.ratios.assign(na, std::vector<std::optional<double>>(grid_b.size()));
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < grid_b.size(); ++j)
      if (out.gains_b[j] > 0.0) out.ratios[i][j] = out.gains_a[i] / out.gains_b[j];
  return out;
}

// ---------------------------------------------------------------------------
// Budget allocation

struct BudgetSplit {
  std::string lever;
  double spend = 0.0;
  double theta = 0.0;
};

struct BudgetCell {
  std::vector<double> spends;
  std::vector<double> thetas;
  double welfare = 0.0;
};

struct BudgetAllocationResult {
  std::vector<BudgetSplit> splits;
  double total_welfare = 0.0;
  double welfare_gain = 0.0;
  double baseline_welfare = 0.0;
  double budget = 0.0;
  double resolution = 0.0;
  std::vector<BudgetCell> cells;  // every evaluated split, in enumeration order
};

namespace detail {

// All (i_1..i_L) with sum <= m, lexicographic order.
inline std::vector<std::vector<std::size_t>> simplex_points(std::size_t levers, std::size_t m) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur(levers, 0);
  while (true) {
    out.push_back(cur);
    // Odometer: bump the last coordinate that still fits, reset the rest.
    std::size_t pos = levers;
    while (pos > 0) {
      --pos;
      std::size_t prefix = 0;
      for (std::size_t q = 0; q < pos; ++q) prefix += cur[q];
      if (prefix + cur[pos] + 1 <= m) {
        ++cur[pos];
        for (std::size_t q = pos + 1; q < levers; ++q) cur[q] = 0;
        break;
      }
      if (pos == 0) return out;
    }
  }
}

}  // namespace detail

inline constexpr std::size_t kMaxBudgetCells = 2'000'000;

/// Exhaustive grid search over the spend simplex {sum spend <= budget} at the
/// given resolution. Ties go to the lexicographically smallest spend vector.
inline BudgetAllocationResult optimize_budget(const Scenario& s, const std::vector<Lever>& levers, double budget,
                                              std::optional<double> resolution = std::nullopt,
                                              std::size_t workers = 1) {
  require(!levers.empty() && levers.size() <= 3, ErrorKind::InvalidLever, "optimizer takes one to three levers");
  require(budget >= 0.0 && std::isfinite(budget), ErrorKind::InvalidGrid, "budget must be nonnegative");
  for (const auto& l : levers) {
    if (l.cost.kind == CostModel::Kind::None)
      fail(ErrorKind::NonInvertibleCost, "lever '" + l.name + "' has no cost model");
    validate(l.cost);
  }
  const double step = resolution.value_or(budget > 0.0 ? budget / 100.0 : 1.0);
  require(step > 0.0 && std::isfinite(step), ErrorKind::InvalidGrid, "resolution must be positive");
  const auto m = static_cast<std::size_t>(std::floor(budget / step + kCountSlack));

  double cells_estimate = 1.0;
  for (std::size_t j = 1; j <= levers.size(); ++j)
    cells_estimate *= static_cast<double>(m + j) / static_cast<double>(j);
  if (cells_estimate > static_cast<double>(kMaxBudgetCells))
    fail(ErrorKind::InvalidGrid, "resolution yields " + format_double(cells_estimate) + " cells; coarsen it");

  const GainEvaluator ev(s);
  const auto points = detail::simplex_points(levers.size(), m);
  BudgetAllocationResult out;
  out.baseline_welfare = ev.baseline();
  out.budget = budget;
  out.resolution = step;
  out.cells = parallel_map(points.size(), workers, [&](std::size_t c) {
    BudgetCell cell;
    std::vector<Lever> applied;
    for (std::size_t j = 0; j < levers.size(); ++j) {
      const double spend = static_cast<double>(points[c][j]) * step;
      Lever l = lever_for_spend(levers[j], s, spend);
      cell.spends.push_back(spend);
      cell.thetas.push_back(l.theta());
      applied.push_back(std::move(l));
    }
    cell.welfare = ev.welfare_with(applied);
    return cell;
  });

  std::size_t best = 0;
  for (std::size_t c = 1; c < out.cells.size(); ++c)
    if (out.cells[c].welfare > out.cells[best].welfare) best = c;
  for (std::size_t j = 0; j < levers.size(); ++j)
    out.splits.push_back({levers[j].name, out.cells[best].spends[j], out.cells[best].thetas[j]});
  out.total_welfare = out.cells[best].welfare;
  out.welfare_gain = out.total_welfare - out.baseline_welfare;
  return out;
}

}  // namespace rvp
