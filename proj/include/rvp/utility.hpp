#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <variant>

#include "rvp/error.hpp"
#include "rvp/numeric.hpp"
#include "rvp/population.hpp"

namespace rvp {

/// At-risk set is the ceil(beta * N) most at-risk records.
struct QuantileThreshold {
  double beta = 0.15;
  friend bool operator==(const QuantileThreshold&, const QuantileThreshold&) = default;
};

/// At-risk iff the outcome is at or beyond t on the risk side.
struct AbsoluteThreshold {
  double value = 0.0;
  friend bool operator==(const AbsoluteThreshold&, const AbsoluteThreshold&) = default;
};

/// Two-valued utility: allocating to an at-risk record yields at_risk_value
/// (the benefit b), allocating to anyone else yields other_value (0 for the
/// step utility, -h for harm/benefit).
struct PartitionedUtility {
  std::variant<QuantileThreshold, AbsoluteThreshold> threshold = QuantileThreshold{};
  double at_risk_value = 1.0;
  double other_value = 0.0;
  // Which tail is at risk; defaults to the population's outcome direction.
  std::optional<Direction> risk_side;

  double harm_ratio() const { return at_risk_value != 0.0 ? -other_value / at_risk_value : 0.0; }

  friend bool operator==(const PartitionedUtility&, const PartitionedUtility&) = default;
};

/// Constant relative risk aversion over consumption w with transfer b:
/// u(w, a) = ((w + b a)^(1 - rho) - w^(1 - rho)) / (1 - rho), log form at rho = 1.
struct CrraUtility {
  double rho = 3.0;
  double benefit = 100.0;
  friend bool operator==(const CrraUtility&, const CrraUtility&) = default;
};

/// u(w, a) = a (slope w + intercept).
struct AffineUtility {
  double slope = 1.0;
  double intercept = 0.0;
  friend bool operator==(const AffineUtility&, const AffineUtility&) = default;
};

struct UtilitySpec {
  std::variant<PartitionedUtility, CrraUtility, AffineUtility> kind;

  const char* name() const {
    switch (kind.index()) {
      case 0: return "partitioned";
      case 1: return "crra";
      default: return "affine";
    }
  }

  friend bool operator==(const UtilitySpec&, const UtilitySpec&) = default;
};

inline void validate(const UtilitySpec& spec) {
  if (const auto* p = std::get_if<PartitionedUtility>(&spec.kind)) {
    require(std::isfinite(p->at_risk_value) && std::isfinite(p->other_value), ErrorKind::InvalidUtility,
            "partitioned values must be finite");
    if (const auto* q = std::get_if<QuantileThreshold>(&p->threshold))
      require(q->beta > 0.0 && q->beta < 1.0, ErrorKind::InvalidUtility,
              "beta must lie in (0, 1), got " + format_double(q->beta));
    else
      require(std::isfinite(std::get<AbsoluteThreshold>(p->threshold).value), ErrorKind::InvalidUtility,
              "absolute threshold must be finite");
  } else if (const auto* c = std::get_if<CrraUtility>(&spec.kind)) {
    require(c->rho > 0.0 && std::isfinite(c->rho), ErrorKind::InvalidUtility,
            "rho must be positive, got " + format_double(c->rho));
    require(c->benefit >= 0.0 && std::isfinite(c->benefit), ErrorKind::InvalidUtility,
            "benefit must be nonnegative, got " + format_double(c->benefit));
  } else {
    const auto& a = std::get<AffineUtility>(spec.kind);
    require(std::isfinite(a.slope) && std::isfinite(a.intercept), ErrorKind::InvalidUtility,
            "affine coefficients must be finite");
  }
}

/// A utility bound to a population: quantile thresholds are materialised and
/// the at-risk set is fixed per record. Levers never modify outcomes, so a
/// resolution stays valid for every population derived from the one it was
/// resolved on.
struct ResolvedUtility {
  UtilitySpec spec;
  double threshold = std::numeric_limits<double>::quiet_NaN();
  Direction risk_side = Direction::HigherIsRisk;
  Flags at_risk;  // partitioned only; one entry per record
};

inline ResolvedUtility resolve(const UtilitySpec& spec, const Population& pop) {
  validate(spec);
  ResolvedUtility r;
  r.spec = spec;
  r.risk_side = pop.direction();
  const auto* p = std::get_if<PartitionedUtility>(&spec.kind);
  if (!p) return r;
  if (p->risk_side) r.risk_side = *p->risk_side;
  const bool high = r.risk_side == Direction::HigherIsRisk;
  const std::size_t n = pop.size();
  r.at_risk.assign(n, 0);

  if (const auto* q = std::get_if<QuantileThreshold>(&p->threshold)) {
    for (std::size_t i = 0; i < n; ++i)
      require(std::isfinite(pop.outcome(i)), ErrorKind::DomainError,
              "quantile threshold needs finite outcomes; record " + pop.ids()[i] + " has none");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto& w = pop.outcomes();
    if (high)
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return w[a] > w[b]; });
    else
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return w[a] < w[b]; });
    const std::size_t m = std::max<std::size_t>(1, std::min(count_ceil(q->beta, n), n));
    for (std::size_t j = 0; j < m; ++j) r.at_risk[order[j]] = 1;
    r.threshold = w[order[m - 1]];
  } else {
    r.threshold = std::get<AbsoluteThreshold>(p->threshold).value;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = pop.outcome(i);
      r.at_risk[i] = (high ? w >= r.threshold : w <= r.threshold) ? 1 : 0;
    }
  }
  return r;
}

namespace detail {

inline double crra_gain(const CrraUtility& c, double w) {
  if (!(w > 0.0) || !(w + c.benefit > 0.0))
    fail(ErrorKind::DomainError, "CRRA utility needs w > 0 and w + b > 0, got w=" + format_double(w));
  const double x = c.benefit / w;
  if (c.rho == 1.0) return std::log1p(x);
  const double e = 1.0 - c.rho;
  // (w+b)^e - w^e = w^e * expm1(e * log1p(b/w)); stable as rho -> 1.
  return std::pow(w, e) * std::expm1(e * std::log1p(x)) / e;
}

inline double partitioned_value(const PartitionedUtility& p, bool at_risk) {
  return at_risk ? p.at_risk_value : p.other_value;
}

}  // namespace detail

/// u(w, a) for a bare outcome value. Partitioned utilities classify w by the
/// resolved threshold (ties at the threshold count as at risk).
inline double eval_utility(const ResolvedUtility& u, double w, bool a) {
  if (const auto* c = std::get_if<CrraUtility>(&u.spec.kind)) {
    if (!a) {
      if (!(w > 0.0)) fail(ErrorKind::DomainError, "CRRA utility needs w > 0, got w=" + format_double(w));
      return 0.0;
    }
    return detail::crra_gain(*c, w);
  }
  if (!a) return 0.0;
  if (const auto* p = std::get_if<PartitionedUtility>(&u.spec.kind)) {
    require(!std::isnan(w), ErrorKind::DomainError, "outcome is missing");
    const bool risk = u.risk_side == Direction::HigherIsRisk ? w >= u.threshold : w <= u.threshold;
    return detail::partitioned_value(*p, risk);
  }
  const auto& af = std::get<AffineUtility>(u.spec.kind);
  require(std::isfinite(w), ErrorKind::DomainError, "outcome is missing");
  return af.slope * w + af.intercept;
}

/// Delta u(w) = u(w, 1) - u(w, 0).
inline double net_gain(const ResolvedUtility& u, double w) { return eval_utility(u, w, true) - eval_utility(u, w, false); }

/// Net gain for record i of the population the utility was resolved on. For
/// partitioned utilities this uses the resolved at-risk set, which breaks
/// ties at the threshold by record order.
inline double record_net_gain(const ResolvedUtility& u, const Population& pop, std::size_t i) {
  if (const auto* p = std::get_if<PartitionedUtility>(&u.spec.kind)) {
    require(u.at_risk.size() == pop.size(), ErrorKind::DomainError,
            "utility was resolved on a population of a different size");
    require(std::isfinite(pop.outcome(i)), ErrorKind::DomainError,
            "record " + pop.ids()[i] + " has no outcome");
    return detail::partitioned_value(*p, u.at_risk[i] != 0);
  }
  return net_gain(u, pop.outcome(i));
}

}  // namespace rvp
