#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "rvp/error.hpp"
#include "rvp/numeric.hpp"
#include "rvp/population.hpp"
#include "rvp/rng.hpp"

namespace rvp {

struct LognormalOutcome {
  double mu = 0.0;
  double sigma = 1.0;
};

struct ParetoOutcome {
  double shape = 2.0;
  double scale = 1.0;
};

/// Exactly ceil(share * N) records get `high`, placed by a seeded shuffle;
/// the rest get `low`.
struct TwoPointOutcome {
  double share_at_risk = 0.15;
  double low = 0.0;
  double high = 400.0;
};

using OutcomeDistribution = std::variant<LognormalOutcome, ParetoOutcome, TwoPointOutcome>;

enum class NoiseMode { Additive, Log };

/// Optional covariates: `age` (integer 18..64), `last_job` (missing at
/// `missing_job_rate`, else one of A/B/C) and group `female`. Records with
/// age > 35 and a missing last job get their prediction noise multiplied by
/// `hard_noise_factor`.
struct SynthCovariates {
  bool enabled = false;
  double missing_job_rate = 0.1;
  double hard_noise_factor = 1.0;
};

struct SynthSpec {
  std::size_t n = 10000;
  OutcomeDistribution outcome = TwoPointOutcome{};
  double noise_sigma = 0.0;
  NoiseMode noise_mode = NoiseMode::Additive;
  Direction direction = Direction::HigherIsRisk;
  std::uint64_t seed = 0;
  SynthCovariates covariates;
};

/// Employment-style default: N = 10,000, 15% at risk with outcomes 0 / 400.
inline SynthSpec two_point_fixture(std::uint64_t seed = 7, double noise_sigma = 300.0) {
  SynthSpec s;
  s.outcome = TwoPointOutcome{0.15, 0.0, 400.0};
  s.noise_sigma = noise_sigma;
  s.seed = seed;
  return s;
}

/// Poverty-style default: lognormal consumption with mean 1,250 and
/// sigma_w = 0.8, log-scale prediction noise, lower outcomes at risk.
inline SynthSpec lognormal_fixture(std::uint64_t seed = 11, double noise_sigma = 0.5) {
  SynthSpec s;
  const double sigma = 0.8;
  s.outcome = LognormalOutcome{std::log(1250.0) - 0.5 * sigma * sigma, sigma};
  s.noise_sigma = noise_sigma;
  s.noise_mode = NoiseMode::Log;
  s.direction = Direction::LowerIsRisk;
  s.seed = seed;
  return s;
}

inline void validate(const SynthSpec& s) {
  require(s.n >= 2, ErrorKind::InvalidSpec, "synthetic population needs N >= 2");
  require(s.noise_sigma >= 0.0 && std::isfinite(s.noise_sigma), ErrorKind::InvalidSpec, "noise sigma must be >= 0");
  bool positive = true;
  if (const auto* l = std::get_if<LognormalOutcome>(&s.outcome)) {
    require(std::isfinite(l->mu) && l->sigma >= 0.0 && std::isfinite(l->sigma), ErrorKind::InvalidSpec,
            "lognormal needs finite mu and sigma >= 0");
  } else if (const auto* p = std::get_if<ParetoOutcome>(&s.outcome)) {
    require(p->shape > 0.0 && p->scale > 0.0, ErrorKind::InvalidSpec, "pareto needs positive shape and scale");
  } else {
    const auto& t = std::get<TwoPointOutcome>(s.outcome);
    require(t.share_at_risk > 0.0 && t.share_at_risk < 1.0, ErrorKind::InvalidSpec,
            "two-point share must lie in (0, 1)");
    require(std::isfinite(t.low) && std::isfinite(t.high) && t.low <= t.high, ErrorKind::InvalidSpec,
            "two-point needs finite low <= high");
    positive = t.low > 0.0;
  }
  if (s.noise_mode == NoiseMode::Log)
    require(positive, ErrorKind::InvalidSpec, "log-scale noise needs strictly positive outcomes");
  require(s.covariates.missing_job_rate >= 0.0 && s.covariates.missing_job_rate <= 1.0, ErrorKind::InvalidSpec,
          "missing job rate must lie in [0, 1]");
  require(s.covariates.hard_noise_factor >= 0.0, ErrorKind::InvalidSpec, "noise factor must be >= 0");
}

/// Seeded synthetic population; every record labeled.
inline Population generate(const SynthSpec& spec) {
  validate(spec);
  const std::size_t n = spec.n;
  PopulationColumns cols;
  cols.direction = spec.direction;
  cols.outcome.resize(n);
  cols.prediction.resize(n);

  SplitMix64 og(derive_seed(spec.seed, streams::kSynthOutcome));
  if (const auto* l = std::get_if<LognormalOutcome>(&spec.outcome)) {
    for (auto& w : cols.outcome) w = std::exp(l->mu + l->sigma * og.normal());
  } else if (const auto* p = std::get_if<ParetoOutcome>(&spec.outcome)) {
    for (auto& w : cols.outcome) w = p->scale * std::pow(og.uniform_open0(), -1.0 / p->shape);
  } else {
    const auto& t = std::get<TwoPointOutcome>(spec.outcome);
    const std::size_t high = count_ceil(t.share_at_risk, n);
    std::vector<std::uint8_t> flag(n, 0);
    std::fill(flag.begin(), flag.begin() + static_cast<std::ptrdiff_t>(high), std::uint8_t{1});
    shuffle(flag, og);
    for (std::size_t i = 0; i < n; ++i) cols.outcome[i] = flag[i] ? t.high : t.low;
  }

  std::vector<double> factor(n, 1.0);
  if (spec.covariates.enabled) {
    SplitMix64 cg(derive_seed(spec.seed, streams::kSynthCovariates));
    auto& attr = cols.attributes;
    attr.covariate_names = {"age", "last_job"};
    attr.covariates.assign(2, {});
    attr.group_names = {"female"};
    attr.groups.assign(1, Flags(n, 0));
    static constexpr const char* kJobs[] = {"A", "B", "C"};
    for (std::size_t i = 0; i < n; ++i) {
      const auto age = 18 + static_cast<int>(cg.below(47));
      const bool missing = cg.uniform() < spec.covariates.missing_job_rate;
      const auto job = cg.below(3);
      attr.groups[0][i] = cg.uniform() < 0.5 ? 1 : 0;
      attr.covariates[0].push_back(std::to_string(age));
      attr.covariates[1].push_back(missing ? std::nullopt : std::optional<std::string>(kJobs[job]));
      if (age > 35 && missing) factor[i] = spec.covariates.hard_noise_factor;
    }
  }

  SplitMix64 ng(derive_seed(spec.seed, streams::kSynthNoise));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = ng.normal() * spec.noise_sigma * factor[i];
    const double w = cols.outcome[i];
    cols.prediction[i] = spec.noise_mode == NoiseMode::Additive ? w + z : std::exp(std::log(w) + z);
  }
  cols.attributes.metadata["source"] = "synthetic";
  return Population(std::move(cols));
}

}  // namespace rvp
