#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "rvp/error.hpp"
#include "rvp/numeric.hpp"
#include "rvp/policy.hpp"
#include "rvp/population.hpp"
#include "rvp/rng.hpp"
#include "rvp/utility.hpp"

namespace rvp {

// ---------------------------------------------------------------------------
// Scenario: the triple (population, utility, capacity) plus policy options.

struct PolicyOptions {
  std::uint64_t seed = 0;
  bool stop_at_nonpositive = false;
  friend bool operator==(const PolicyOptions&, const PolicyOptions&) = default;
};

struct Scenario {
  std::shared_ptr<const Population> population;
  UtilitySpec utility;
  Constraint constraint;
  PolicyOptions policy;

  const Population& pop() const { return *population; }
};

inline Scenario make_scenario(Population pop, UtilitySpec u, double capacity, PolicyOptions policy = {}) {
  Scenario s;
  Constraint c;
  c.capacity = capacity;
  c.population_size = pop.size();
  s.population = std::make_shared<const Population>(std::move(pop));
  s.utility = std::move(u);
  s.constraint = std::move(c);
  s.policy = policy;
  return s;
}

// ---------------------------------------------------------------------------
// Costs

/// c(theta). Linear charges unit_cost per unit of lever magnitude;
/// per_person charges unit_cost per affected record (per recipient and
/// currency unit for benefit/harm levers); table interpolates (delta, cost)
/// points that start at (0, 0).
struct CostModel {
  enum class Kind { None, Linear, PerPerson, Table };
  Kind kind = Kind::None;
  double unit_cost = 0.0;
  std::vector<std::pair<double, double>> table;
  std::string currency;

  static CostModel linear(double unit, std::string currency = "") {
    return {Kind::Linear, unit, {}, std::move(currency)};
  }
  static CostModel per_person(double unit, std::string currency = "") {
    return {Kind::PerPerson, unit, {}, std::move(currency)};
  }
  static CostModel tabulated(std::vector<std::pair<double, double>> points, std::string currency = "") {
    return {Kind::Table, 0.0, std::move(points), std::move(currency)};
  }

  friend bool operator==(const CostModel&, const CostModel&) = default;
};

inline const char* to_string(CostModel::Kind k) {
  switch (k) {
    case CostModel::Kind::None: return "none";
    case CostModel::Kind::Linear: return "linear";
    case CostModel::Kind::PerPerson: return "per_person";
    case CostModel::Kind::Table: return "table";
  }
  return "none";
}

inline void validate(const CostModel& c) {
  switch (c.kind) {
    case CostModel::Kind::None: return;
    case CostModel::Kind::Linear:
    case CostModel::Kind::PerPerson:
      require(c.unit_cost >= 0.0 && std::isfinite(c.unit_cost), ErrorKind::InvalidLever,
              "unit cost must be nonnegative");
      return;
    case CostModel::Kind::Table:
      require(c.table.size() >= 2, ErrorKind::InvalidLever, "cost table needs at least two points");
      require(c.table.front().first == 0.0 && c.table.front().second == 0.0, ErrorKind::InvalidLever,
              "cost table must start at (0, 0)");
      for (std::size_t i = 1; i < c.table.size(); ++i) {
        require(c.table[i].first > c.table[i - 1].first, ErrorKind::InvalidLever,
                "cost table magnitudes must increase strictly");
        require(c.table[i].second >= c.table[i - 1].second, ErrorKind::InvalidLever,
                "cost table must be nondecreasing");
      }
      return;
  }
}

namespace detail {

inline double table_cost(const CostModel& c, double delta) {
  const auto& t = c.table;
  if (delta < t.front().first - 1e-12 || delta > t.back().first + 1e-12)
    fail(ErrorKind::CostOutOfRange, "magnitude " + format_double(delta) + " outside cost table range [" +
                                        format_double(t.front().first) + ", " + format_double(t.back().first) + "]");
  delta = std::clamp(delta, t.front().first, t.back().first);
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (delta <= t[i].first) {
      const double f = (delta - t[i - 1].first) / (t[i].first - t[i - 1].first);
      return t[i - 1].second + f * (t[i].second - t[i - 1].second);
    }
  }
  return t.back().second;
}

// Largest magnitude whose tabulated cost does not exceed spend.
inline double table_inverse(const CostModel& c, double spend) {
  const auto& t = c.table;
  if (spend >= t.back().second) return t.back().first;
  for (std::size_t i = t.size() - 1; i-- > 0;) {
    if (spend >= t[i].second) {
      const double rise = t[i + 1].second - t[i].second;
      if (rise <= 0.0) return t[i + 1].first;
      return t[i].first + (spend - t[i].second) / rise * (t[i + 1].first - t[i].first);
    }
  }
  return 0.0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Levers

/// p~ = p + eta (w - p) on masked records. An empty mask means everyone.
struct PredictionImprovement {
  double eta = 0.0;
  std::optional<Mask> mask;
  friend bool operator==(const PredictionImprovement&, const PredictionImprovement&) = default;
};

/// alpha -> alpha + delta. With a target mask the slots are local: they go
/// to that subgroup only, sized as a fraction of the subgroup.
struct ExpandCapacity {
  double delta_alpha = 0.0;
  std::optional<Mask> target;
  friend bool operator==(const ExpandCapacity&, const ExpandCapacity&) = default;
};

/// Replaces the CRRA transfer b or the partitioned at-risk value.
struct Benefit {
  double new_benefit = 0.0;
  friend bool operator==(const Benefit&, const Benefit&) = default;
};

/// Sets h/b with b held fixed.
struct HarmReduction {
  double new_harm_ratio = 0.0;
  friend bool operator==(const HarmReduction&, const HarmReduction&) = default;
};

struct LabelingOrder {
  enum class Kind { Random, ByMask };
  Kind kind = Kind::Random;
  std::uint64_t seed = 0;
  std::optional<Mask> mask;  // ByMask only
  friend bool operator==(const LabelingOrder&, const LabelingOrder&) = default;
};

/// Exactly floor(share * N) records end up labeled.
struct DataLabeling {
  double label_share = 1.0;
  LabelingOrder order;
  friend bool operator==(const DataLabeling&, const DataLabeling&) = default;
};

using LeverAction = std::variant<PredictionImprovement, ExpandCapacity, Benefit, HarmReduction, DataLabeling>;

struct Lever {
  std::string name;
  LeverAction action;
  CostModel cost;

  const char* kind_name() const {
    switch (action.index()) {
      case 0: return "prediction_improvement";
      case 1: return "expand_capacity";
      case 2: return "benefit";
      case 3: return "harm_reduction";
      default: return "data_labeling";
    }
  }

  /// The lever's magnitude theta.
  double theta() const {
    return std::visit(
        [](const auto& a) -> double {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, PredictionImprovement>) return a.eta;
          else if constexpr (std::is_same_v<T, ExpandCapacity>) return a.delta_alpha;
          else if constexpr (std::is_same_v<T, Benefit>) return a.new_benefit;
          else if constexpr (std::is_same_v<T, HarmReduction>) return a.new_harm_ratio;
          else return a.label_share;
        },
        action);
  }

  /// Same lever family at magnitude theta.
  Lever at(double theta) const {
    Lever l = *this;
    std::visit(
        [theta](auto& a) {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, PredictionImprovement>) a.eta = theta;
          else if constexpr (std::is_same_v<T, ExpandCapacity>) a.delta_alpha = theta;
          else if constexpr (std::is_same_v<T, Benefit>) a.new_benefit = theta;
          else if constexpr (std::is_same_v<T, HarmReduction>) a.new_harm_ratio = theta;
          else a.label_share = theta;
        },
        l.action);
    return l;
  }

  friend bool operator==(const Lever&, const Lever&) = default;
};

// ---------------------------------------------------------------------------
// Lever transforms. None of them mutate their inputs.

inline Population apply_prediction_improvement(const Population& pop, double eta, const Mask& mask) {
  require(eta >= 0.0 && eta <= 1.0, ErrorKind::InvalidLever, "eta must lie in [0, 1], got " + format_double(eta));
  require(mask.size() == pop.size(), ErrorKind::DomainError, "mask size differs from population size");
  std::vector<double> p = pop.predictions();
  const double keep = 1.0 - eta;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (!mask[i]) continue;
    if (!pop.is_labeled(i))
      fail(ErrorKind::UnlabeledInMask, "record " + pop.ids()[i] + " is masked for improvement but unlabeled");
    // (1 - eta) p + eta w: exact at both endpoints.
    p[i] = std::fma(eta, pop.outcome(i), keep * p[i]);
  }
  return pop.with_predictions(std::move(p));
}

inline Constraint apply_capacity(const Constraint& c, double delta_alpha) {
  require(delta_alpha >= 0.0 && std::isfinite(delta_alpha), ErrorKind::InvalidLever,
          "capacity increase must be nonnegative, got " + format_double(delta_alpha));
  if (c.capacity + delta_alpha > 1.0 + 1e-12)
    fail(ErrorKind::CapacityOverflow, "capacity " + format_double(c.capacity) + " + " + format_double(delta_alpha) +
                                          " exceeds 1");
  Constraint out = c;
  out.capacity = std::min(1.0, c.capacity + delta_alpha);
  return out;
}

inline Constraint apply_capacity(const Constraint& c, double delta_alpha, const Mask& target) {
  require(delta_alpha >= 0.0 && std::isfinite(delta_alpha), ErrorKind::InvalidLever,
          "capacity increase must be nonnegative, got " + format_double(delta_alpha));
  require(target.size() == c.population_size, ErrorKind::DomainError, "target mask has wrong size");
  Constraint out = c;
  auto it = std::find_if(out.reserved.begin(), out.reserved.end(),
                         [&](const ReservedCapacity& r) { return r.mask.member == target.member; });
  const double before = it == out.reserved.end() ? 0.0 : it->capacity;
  if (before + delta_alpha > 1.0 + 1e-12)
    fail(ErrorKind::CapacityOverflow, "local capacity " + format_double(before + delta_alpha) + " exceeds 1");
  if (delta_alpha == 0.0) return out;
  if (it == out.reserved.end())
    out.reserved.push_back({target, delta_alpha});
  else
    it->capacity = std::min(1.0, before + delta_alpha);
  return out;
}

inline UtilitySpec apply_benefit(const UtilitySpec& u, double new_benefit) {
  require(new_benefit >= 0.0 && std::isfinite(new_benefit), ErrorKind::InvalidLever,
          "benefit must be nonnegative, got " + format_double(new_benefit));
  UtilitySpec out = u;
  if (auto* c = std::get_if<CrraUtility>(&out.kind))
    c->benefit = new_benefit;
  else if (auto* p = std::get_if<PartitionedUtility>(&out.kind))
    p->at_risk_value = new_benefit;
  else
    fail(ErrorKind::VariantMismatch, "benefit lever needs a CRRA or partitioned utility");
  return out;
}

inline UtilitySpec apply_harm_reduction(const UtilitySpec& u, double new_ratio) {
  require(new_ratio >= 0.0 && std::isfinite(new_ratio), ErrorKind::InvalidLever,
          "harm ratio must be nonnegative, got " + format_double(new_ratio));
  const auto* p = std::get_if<PartitionedUtility>(&u.kind);
  if (!p || p->other_value > 0.0)
    fail(ErrorKind::VariantMismatch, "harm lever needs a partitioned utility with nonpositive misallocation value");
  UtilitySpec out = u;
  auto& q = std::get<PartitionedUtility>(out.kind);
  q.other_value = new_ratio == 0.0 ? 0.0 : -new_ratio * q.at_risk_value;
  return out;
}

/// Labels exactly floor(share * N) records. Priority: (ByMask) mask members
/// first, then currently labeled records, then a seeded random order. Shares
/// are therefore nested: a larger share labels a superset.
inline Population apply_labeling(const Population& pop, double label_share, const LabelingOrder& order) {
  require(label_share >= 0.0 && label_share <= 1.0, ErrorKind::InvalidLever,
          "label share must lie in [0, 1], got " + format_double(label_share));
  const std::size_t n = pop.size();
  if (order.kind == LabelingOrder::Kind::ByMask)
    require(order.mask && order.mask->size() == n, ErrorKind::InvalidLever, "mask-priority labeling needs a mask");
  const std::size_t target = std::min(count_floor(label_share, n), n);
  const auto perm = seeded_permutation(n, derive_seed(order.seed, streams::kLabeling));
  std::vector<std::size_t> position(n);
  for (std::size_t r = 0; r < n; ++r) position[perm[r]] = r;
  auto key = [&](std::size_t i) {
    const int mask_rank = (order.kind == LabelingOrder::Kind::ByMask && (*order.mask)[i]) ? 0 : 1;
    const int label_rank = pop.is_labeled(i) ? 0 : 1;
    return std::tuple(mask_rank, label_rank, position[i]);
  };
  std::vector<std::size_t> idx(perm);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  Flags labeled(n, 0);
  for (std::size_t r = 0; r < target; ++r) labeled[idx[r]] = 1;
  return pop.with_labeled(std::move(labeled));
}

// ---------------------------------------------------------------------------
// Scenario-level application

namespace detail {

inline Mask improvement_mask(const Population& pop, const PredictionImprovement& imp) {
  Mask m = imp.mask ? *imp.mask : Mask::all(pop.size());
  require(m.size() == pop.size(), ErrorKind::DomainError, "improvement mask has wrong size");
  // Improvement can only act on records that have a prediction.
  for (std::size_t i = 0; i < m.size(); ++i)
    if (!pop.is_labeled(i)) m.member[i] = 0;
  return m;
}

inline int application_rank(const Lever& l) {
  switch (l.action.index()) {
    case 4: return 0;  // labeling
    case 0: return 1;  // prediction improvement
    case 2: return 2;  // benefit
    case 3: return 3;  // harm
    default: return 4;  // capacity
  }
}

}  // namespace detail

inline Scenario apply_lever(const Scenario& s, const Lever& lever) {
  Scenario out = s;
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, PredictionImprovement>) {
          const Mask m = detail::improvement_mask(s.pop(), a);
          out.population = std::make_shared<const Population>(apply_prediction_improvement(s.pop(), a.eta, m));
        } else if constexpr (std::is_same_v<T, ExpandCapacity>) {
          out.constraint = a.target ? apply_capacity(s.constraint, a.delta_alpha, *a.target)
                                    : apply_capacity(s.constraint, a.delta_alpha);
        } else if constexpr (std::is_same_v<T, Benefit>) {
          out.utility = apply_benefit(s.utility, a.new_benefit);
        } else if constexpr (std::is_same_v<T, HarmReduction>) {
          out.utility = apply_harm_reduction(s.utility, a.new_harm_ratio);
        } else {
          out.population = std::make_shared<const Population>(apply_labeling(s.pop(), a.label_share, a.order));
        }
      },
      lever.action);
  return out;
}

/// Joint application in the fixed order labeling, prediction improvement,
/// utility changes, capacity; ties keep the listed order.
inline Scenario apply_levers(const Scenario& s, std::vector<Lever> levers) {
  std::stable_sort(levers.begin(), levers.end(), [](const Lever& a, const Lever& b) {
    return detail::application_rank(a) < detail::application_rank(b);
  });
  Scenario out = s;
  for (const auto& l : levers) out = apply_lever(out, l);
  return out;
}

namespace detail {

// Magnitude of change relative to the scenario and the count of affected
// records (or recipient-currency units for benefit/harm).
struct LeverDelta {
  double magnitude = 0.0;
  double affected = 0.0;
};

inline LeverDelta lever_delta(const Lever& lever, const Scenario& s) {
  const Population& pop = s.pop();
  const std::size_t n = pop.size();
  const double k = static_cast<double>(s.constraint.slots());
  return std::visit(
      [&](const auto& a) -> LeverDelta {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, PredictionImprovement>) {
          const double count = a.eta > 0.0 ? static_cast<double>(improvement_mask(pop, a).count()) : 0.0;
          return {a.eta, count};
        } else if constexpr (std::is_same_v<T, ExpandCapacity>) {
          if (a.target) {
            const std::size_t members = a.target->count();
            double before = 0.0;
            for (const auto& r : s.constraint.reserved)
              if (r.mask.member == a.target->member) before = r.capacity;
            const auto added = count_floor(before + a.delta_alpha, members) - count_floor(before, members);
            return {a.delta_alpha, static_cast<double>(added)};
          }
          const auto added = count_floor(s.constraint.capacity + a.delta_alpha, n) - s.constraint.slots();
          return {a.delta_alpha, static_cast<double>(added)};
        } else if constexpr (std::is_same_v<T, Benefit>) {
          double old = 0.0;
          if (const auto* c = std::get_if<CrraUtility>(&s.utility.kind)) old = c->benefit;
          else if (const auto* p = std::get_if<PartitionedUtility>(&s.utility.kind)) old = p->at_risk_value;
          else fail(ErrorKind::VariantMismatch, "benefit lever needs a CRRA or partitioned utility");
          const double d = std::max(0.0, a.new_benefit - old);
          return {d, d * k};
        } else if constexpr (std::is_same_v<T, HarmReduction>) {
          const auto* p = std::get_if<PartitionedUtility>(&s.utility.kind);
          if (!p) fail(ErrorKind::VariantMismatch, "harm lever needs a partitioned utility");
          const double d = std::max(0.0, p->harm_ratio() - a.new_harm_ratio);
          return {d, d * k};
        } else {
          const double share = pop.label_share();
          const auto target = count_floor(a.label_share, n);
          const auto have = pop.labeled_count();
          const double added = target > have ? static_cast<double>(target - have) : 0.0;
          return {std::max(0.0, a.label_share - share), added};
        }
      },
      lever.action);
}

}  // namespace detail

/// Investment cost of a lever applied to a scenario.
inline double lever_cost(const Lever& lever, const Scenario& s) {
  validate(lever.cost);
  const auto d = detail::lever_delta(lever, s);
  switch (lever.cost.kind) {
    case CostModel::Kind::None:
      fail(ErrorKind::NonInvertibleCost, "lever '" + lever.name + "' has no cost model");
    case CostModel::Kind::Linear: return lever.cost.unit_cost * d.magnitude;
    case CostModel::Kind::PerPerson: return lever.cost.unit_cost * d.affected;
    case CostModel::Kind::Table: return detail::table_cost(lever.cost, d.magnitude);
  }
  return 0.0;
}

/// Upper bound of the lever's magnitude in this scenario.
inline double theta_upper_bound(const Lever& lever, const Scenario& s) {
  return std::visit(
      [&](const auto& a) -> double {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ExpandCapacity>) {
          if (a.target) {
            for (const auto& r : s.constraint.reserved)
              if (r.mask.member == a.target->member) return 1.0 - r.capacity;
            return 1.0;
          }
          return 1.0 - s.constraint.capacity;
        } else if constexpr (std::is_same_v<T, HarmReduction>) {
          return std::numeric_limits<double>::infinity();
        } else if constexpr (std::is_same_v<T, Benefit>) {
          return std::numeric_limits<double>::infinity();
        } else {
          return 1.0;
        }
      },
      lever.action);
}

/// The lever magnitude a given spend buys, capped at the lever's bounds.
inline Lever lever_for_spend(const Lever& tmpl, const Scenario& s, double spend) {
  validate(tmpl.cost);
  require(spend >= 0.0, ErrorKind::InvalidLever, "spend must be nonnegative");
  const auto& cost = tmpl.cost;
  if (cost.kind == CostModel::Kind::None)
    fail(ErrorKind::NonInvertibleCost, "lever '" + tmpl.name + "' has no cost model");
  if (cost.kind != CostModel::Kind::Table && !(cost.unit_cost > 0.0))
    fail(ErrorKind::NonInvertibleCost, "lever '" + tmpl.name + "' has a zero unit cost");

  const Population& pop = s.pop();
  const std::size_t n = pop.size();
  const double nd = static_cast<double>(n);
  const double k = static_cast<double>(s.constraint.slots());

  // Linear and table models invert to a magnitude increment.
  auto increment = [&]() {
    return cost.kind == CostModel::Kind::Table ? detail::table_inverse(cost, spend) : spend / cost.unit_cost;
  };
  auto units = [&]() { return std::floor(spend / cost.unit_cost + kCountSlack); };
  const bool per_person = cost.kind == CostModel::Kind::PerPerson;

  return std::visit(
      [&](const auto& a) -> Lever {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, PredictionImprovement>) {
          if (per_person)
            fail(ErrorKind::NonInvertibleCost, "per-person improvement cost does not determine eta");
          return tmpl.at(std::min(1.0, increment()));
        } else if constexpr (std::is_same_v<T, ExpandCapacity>) {
          const double bound = theta_upper_bound(tmpl, s);
          if (!per_person) return tmpl.at(std::min(bound, increment()));
          if (a.target) {
            const double members = static_cast<double>(a.target->count());
            if (members == 0) return tmpl.at(0.0);
            double before = 0.0;
            for (const auto& r : s.constraint.reserved)
              if (r.mask.member == a.target->member) before = r.capacity;
            const double have = static_cast<double>(count_floor(before, a.target->count()));
            return tmpl.at(std::min(bound, std::max(0.0, (have + units()) / members - before)));
          }
          return tmpl.at(std::min(bound, std::max(0.0, (k + units()) / nd - s.constraint.capacity)));
        } else if constexpr (std::is_same_v<T, Benefit>) {
          double old = 0.0;
          if (const auto* c = std::get_if<CrraUtility>(&s.utility.kind)) old = c->benefit;
          else if (const auto* p = std::get_if<PartitionedUtility>(&s.utility.kind)) old = p->at_risk_value;
          else fail(ErrorKind::VariantMismatch, "benefit lever needs a CRRA or partitioned utility");
          const double d = per_person ? spend / (cost.unit_cost * k) : increment();
          return tmpl.at(old + d);
        } else if constexpr (std::is_same_v<T, HarmReduction>) {
          const auto* p = std::get_if<PartitionedUtility>(&s.utility.kind);
          if (!p) fail(ErrorKind::VariantMismatch, "harm lever needs a partitioned utility");
          const double d = per_person ? spend / (cost.unit_cost * k) : increment();
          return tmpl.at(std::max(0.0, p->harm_ratio() - d));
        } else {
          if (!per_person) return tmpl.at(std::min(1.0, pop.label_share() + increment()));
          const double have = static_cast<double>(pop.labeled_count());
          return tmpl.at(std::min(1.0, (have + units()) / nd));
        }
      },
      tmpl.action);
}

}  // namespace rvp
