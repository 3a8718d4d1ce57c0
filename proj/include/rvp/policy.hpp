#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rvp/error.hpp"
#include "rvp/numeric.hpp"
#include "rvp/population.hpp"
#include "rvp/rng.hpp"
#include "rvp/utility.hpp"

namespace rvp {

/// Upper bound on allocations within a subgroup: at most floor(capacity * N_g)
/// members of the mask are served.
struct SubgroupCap {
  Mask mask;
  double capacity = 1.0;
  friend bool operator==(const SubgroupCap&, const SubgroupCap&) = default;
};

/// Local capacity: floor(capacity * N_g) additional slots usable only by
/// members of the mask, filled after the global slots.
struct ReservedCapacity {
  Mask mask;
  double capacity = 0.0;
  friend bool operator==(const ReservedCapacity&, const ReservedCapacity&) = default;
};

struct Constraint {
  double capacity = 0.1;
  std::size_t population_size = 0;
  std::vector<SubgroupCap> subgroup_caps;
  std::vector<ReservedCapacity> reserved;

  /// Global slot count k = floor(alpha * N).
  std::size_t slots() const { return count_floor(capacity, population_size); }

  friend bool operator==(const Constraint&, const Constraint&) = default;
};

inline void validate(const Constraint& c) {
  require(c.population_size > 0, ErrorKind::InvalidConstraint, "population size must be positive");
  require(c.capacity > 0.0 && c.capacity <= 1.0, ErrorKind::InvalidConstraint,
          "capacity must lie in (0, 1], got " + format_double(c.capacity));
  require(c.slots() >= 1, ErrorKind::InvalidConstraint,
          "capacity " + format_double(c.capacity) + " leaves no slot for N=" + std::to_string(c.population_size));
  for (const auto& cap : c.subgroup_caps) {
    require(cap.mask.size() == c.population_size, ErrorKind::InvalidConstraint, "subgroup cap mask has wrong size");
    require(cap.capacity > 0.0 && cap.capacity <= 1.0, ErrorKind::InvalidConstraint,
            "subgroup capacity must lie in (0, 1], got " + format_double(cap.capacity));
  }
  for (const auto& r : c.reserved) {
    require(r.mask.size() == c.population_size, ErrorKind::InvalidConstraint, "local capacity mask has wrong size");
    require(r.capacity > 0.0 && r.capacity <= 1.0, ErrorKind::InvalidConstraint,
            "local capacity must lie in (0, 1], got " + format_double(r.capacity));
  }
}

struct FillLog {
  std::uint64_t seed = 0;
  std::size_t count = 0;  // slots filled at random among unlabeled records
};

struct Allocation {
  Flags assigned;
  std::size_t slots_used = 0;
  FillLog fill;
  bool infeasible = false;  // subgroup caps prevented filling every slot
  std::vector<std::string> warnings;
};

namespace detail {

struct CapTracker {
  const Constraint& c;
  std::vector<std::size_t> limit, used;

  explicit CapTracker(const Constraint& con) : c(con) {
    for (const auto& cap : c.subgroup_caps) {
      limit.push_back(count_floor(cap.capacity, cap.mask.count()));
      used.push_back(0);
    }
  }
  bool allows(std::size_t i) const {
    for (std::size_t g = 0; g < limit.size(); ++g)
      if (c.subgroup_caps[g].mask[i] && used[g] >= limit[g]) return false;
    return true;
  }
  void take(std::size_t i) {
    for (std::size_t g = 0; g < limit.size(); ++g)
      if (c.subgroup_caps[g].mask[i]) ++used[g];
  }
};

}  // namespace detail

/// Threshold policy: serve the top floor(alpha * N) records by score.
///
/// Prediction scoring ranks labeled records only; when they run out, the
/// remaining slots go to unlabeled records drawn uniformly without
/// replacement (seeded Fisher-Yates over the unlabeled records in record
/// order). Outcome scoring ranks every record and is the perfect-targeting
/// oracle. Candidates that would exceed a subgroup cap are skipped. When
/// `stop_rule` is given, ranking stops at the first candidate whose predicted
/// net gain is not positive and no random fill follows.
inline Allocation allocate(const Population& pop, const Constraint& c, ScoreField field, std::uint64_t seed,
                           const ResolvedUtility* stop_rule = nullptr) {
  validate(c);
  require(c.population_size == pop.size(), ErrorKind::InvalidConstraint,
          "constraint sized for N=" + std::to_string(c.population_size) + " but population has " +
              std::to_string(pop.size()));
  const std::size_t n = pop.size();
  const std::size_t k = c.slots();
  Allocation a;
  a.assigned.assign(n, 0);
  a.fill.seed = seed;
  detail::CapTracker caps(c);
  bool skipped = false;
  bool stopped = false;

  auto assign = [&](std::size_t i) {
    a.assigned[i] = 1;
    caps.take(i);
    ++a.slots_used;
  };

  const auto order = priority_order(pop, field);
  for (std::size_t i : order) {
    if (a.slots_used == k) break;
    if (stop_rule) {
      const double score = field == ScoreField::Prediction ? pop.prediction(i) : pop.outcome(i);
      if (!(net_gain(*stop_rule, score) > 0.0)) {
        stopped = true;
        break;
      }
    }
    if (!caps.allows(i)) {
      skipped = true;
      continue;
    }
    assign(i);
  }

  if (a.slots_used < k && field == ScoreField::Prediction && !stopped) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < n; ++i)
      if (!pop.is_labeled(i)) pool.push_back(i);
    SplitMix64 g(derive_seed(seed, streams::kRandomFill));
    shuffle(pool, g);
    for (std::size_t i : pool) {
      if (a.slots_used == k) break;
      if (!caps.allows(i)) {
        skipped = true;
        continue;
      }
      assign(i);
      ++a.fill.count;
    }
  }

  if (a.slots_used < k && skipped) {
    a.infeasible = true;
    a.warnings.push_back("subgroup caps left " + std::to_string(k - a.slots_used) + " of " + std::to_string(k) +
                         " slots unfilled");
  }

  // Local capacity: extra slots for mask members, next in rank order first.
  for (std::size_t r = 0; r < c.reserved.size(); ++r) {
    const auto& res = c.reserved[r];
    std::size_t extra = count_floor(res.capacity, res.mask.count());
    for (std::size_t i : order) {
      if (extra == 0) break;
      if (!res.mask[i] || a.assigned[i]) continue;
      assign(i);
      --extra;
    }
    if (extra > 0 && field == ScoreField::Prediction) {
      std::vector<std::size_t> pool;
      for (std::size_t i = 0; i < n; ++i)
        if (res.mask[i] && !a.assigned[i] && !pop.is_labeled(i)) pool.push_back(i);
      SplitMix64 g(derive_seed(seed ^ (r + 1), streams::kRandomFill));
      shuffle(pool, g);
      for (std::size_t i : pool) {
        if (extra == 0) break;
        assign(i);
        ++a.fill.count;
        --extra;
      }
    }
  }
  return a;
}

/// Per-capita welfare (1/N) sum_i u(w_i, a_i).
inline double welfare(const Population& pop, const Allocation& alloc, const ResolvedUtility& u) {
  require(alloc.assigned.size() == pop.size(), ErrorKind::DomainError, "allocation length differs from population");
  double total = 0.0;
  for (std::size_t i = 0; i < pop.size(); ++i)
    if (alloc.assigned[i]) total += record_net_gain(u, pop, i);
  return total / static_cast<double>(pop.size());
}

/// Exact expected welfare of a uniformly random allocation of the same slot
/// counts: (k / N) * mean net gain, plus the local-capacity terms. Subgroup
/// caps are not modelled.
inline double random_baseline(const Population& pop, const Constraint& c, const ResolvedUtility& u) {
  validate(c);
  const double n = static_cast<double>(pop.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pop.size(); ++i) total += record_net_gain(u, pop, i);
  // k * total / N^2 in this order keeps integer-valued inputs exact.
  double value = static_cast<double>(c.slots()) * total / (n * n);
  for (const auto& r : c.reserved) {
    const std::size_t members = r.mask.count();
    if (members == 0) continue;
    double sub = 0.0;
    for (std::size_t i = 0; i < pop.size(); ++i)
      if (r.mask[i]) sub += record_net_gain(u, pop, i);
    value += static_cast<double>(count_floor(r.capacity, members)) * sub / (static_cast<double>(members) * n);
  }
  return value;
}

/// Welfare of ranking by true outcomes.
inline double perfect_baseline(const Population& pop, const Constraint& c, const ResolvedUtility& u) {
  return welfare(pop, allocate(pop, c, ScoreField::Outcome, 0), u);
}

inline double welfare_ratio(double policy_welfare, double baseline_welfare) {
  if (baseline_welfare == 0.0) fail(ErrorKind::ZeroBaseline, "baseline welfare is zero; report differences instead");
  return policy_welfare / baseline_welfare;
}

}  // namespace rvp
