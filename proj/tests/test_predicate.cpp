#include <gtest/gtest.h>

#include <sstream>

#include "rvp/predicate.hpp"
#include "rvp/rng.hpp"
#include "rvp/synth.hpp"

using namespace rvp;

namespace {

// Five jobseekers; records 1 and 4 (1-based) are over 35 with no last job.
Population jobseekers() {
  std::istringstream in(
      "outcome,prediction,age,last_job,region,female\n"
      "100,90,41,,north,1\n"
      "50,60,29,,south,0\n"
      "80,85,52,retail,north,1\n"
      "300,200,36,NA,east,0\n"
      "10,20,35,,west,1\n");
  Schema s;
  s.missing = "NA";
  s.group_cols = {"female"};
  return load_population(in, s);
}

std::vector<std::size_t> members(const Mask& m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) out.push_back(i + 1);
  return out;
}

}  // namespace

TEST(Predicate, OverThirtyFiveWithMissingHistory) {
  const auto pop = jobseekers();
  EXPECT_EQ(members(covariate_mask(pop, "age > 35 AND last_job IS MISSING")), (std::vector<std::size_t>{1, 4}));
}

TEST(Predicate, TrivialMasks) {
  const auto pop = jobseekers();
  EXPECT_EQ(covariate_mask(pop, "TRUE").count(), 5u);
  EXPECT_EQ(covariate_mask(pop, "age > 100").count(), 0u);
  EXPECT_EQ(covariate_mask(pop, "FALSE").count(), 0u);
  EXPECT_EQ(covariate_mask(pop, "true and age >= 0").count(), 5u);
}

TEST(Predicate, ComparisonsAndEquality) {
  const auto pop = jobseekers();
  EXPECT_EQ(members(covariate_mask(pop, "region = north")), (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(members(covariate_mask(pop, "region != 'north'")), (std::vector<std::size_t>{2, 4, 5}));
  EXPECT_EQ(members(covariate_mask(pop, "age <= 35")), (std::vector<std::size_t>{2, 5}));
  EXPECT_EQ(members(covariate_mask(pop, "age == 36.0")), (std::vector<std::size_t>{4}));
  EXPECT_EQ(members(covariate_mask(pop, "last_job IS NOT MISSING")), (std::vector<std::size_t>{3}));
  // Missing values never satisfy a comparison, including !=.
  EXPECT_EQ(members(covariate_mask(pop, "last_job != retail")), (std::vector<std::size_t>{}));
  EXPECT_EQ(members(covariate_mask(pop, "female")), (std::vector<std::size_t>{1, 3, 5}));
  EXPECT_EQ(members(covariate_mask(pop, "female = 0")), (std::vector<std::size_t>{2, 4}));
}

TEST(Predicate, Errors) {
  const auto pop = jobseekers();
  auto kind = [&](const char* text) {
    try {
      covariate_mask(pop, text);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::DomainError;
  };
  EXPECT_EQ(kind("height > 3"), ErrorKind::UnknownField);
  EXPECT_EQ(kind("age"), ErrorKind::UnknownField);
  EXPECT_EQ(kind("age > 3 OR age < 1"), ErrorKind::ConfigError);
  EXPECT_EQ(kind("age IS GONE"), ErrorKind::ConfigError);
  EXPECT_EQ(kind(""), ErrorKind::ConfigError);
  EXPECT_EQ(kind("region = 'north"), ErrorKind::ConfigError);
}

TEST(Predicate, ConjunctionIsIntersectionAndIdempotent) {
  SynthSpec spec = two_point_fixture(5, 10.0);
  spec.n = 400;
  spec.covariates.enabled = true;
  spec.covariates.missing_job_rate = 0.3;
  const auto pop = generate(spec);
  const char* clauses[] = {"age > 35", "last_job IS MISSING", "female", "last_job = B", "age <= 50"};
  for (const char* a : clauses) {
    for (const char* b : clauses) {
      const Mask both = covariate_mask(pop, std::string(a) + " AND " + b);
      EXPECT_EQ(both.member, (covariate_mask(pop, a) & covariate_mask(pop, b)).member) << a << " / " << b;
      EXPECT_EQ(both.member, covariate_mask(pop, std::string(a) + " AND " + b).member);
    }
    const Mask self = covariate_mask(pop, std::string(a) + " AND " + a);
    EXPECT_EQ(self.member, covariate_mask(pop, a).member);
  }
}
