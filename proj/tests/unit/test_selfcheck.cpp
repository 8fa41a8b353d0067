#include <gtest/gtest.h>

#include <algorithm>

#include "aden/selfcheck.hpp"

using namespace aden;

TEST(Selfcheck, FoundationsPass) {
  EXPECT_TRUE(check_geodesic_axioms(10000, 1).passed);
  EXPECT_TRUE(check_quaternion_roundtrip(10000, 2).passed);
  EXPECT_TRUE(check_umeyama_planted(100, 3).passed);
}

TEST(Selfcheck, EveryGradientCheckPasses) {
  const auto results = check_gradients(4);
  EXPECT_GE(results.size(), 8u);
  for (const auto& r : results) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST(Selfcheck, CorruptedBackwardIsCaught) {
  const auto results = check_gradients(4, true);
  bool any_failed = false;
  for (const auto& r : results) any_failed |= !r.passed;
  EXPECT_TRUE(any_failed);
}

TEST(Selfcheck, HaarInvariance) {
  const CheckResult r = check_haar_invariance(100000, 5);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Selfcheck, Lemma1EstimatorMatchesFiniteDifferences) {
  const Lemma1Result r = lemma1_experiment(5000, 50000, 6);
  EXPECT_LT(r.rel_error, 0.02);
  // Ten times more samples: variance should drop by roughly ten.
  EXPECT_GT(r.variance_ratio, 4.0);
  EXPECT_LT(r.variance_ratio, 25.0);
}

TEST(Selfcheck, TableHasOneLinePerCheck) {
  const std::vector<CheckResult> rs{{"a", true, "ok", 0.1}, {"b", false, "bad", 0.2}};
  const std::string t = format_check_table(rs);
  EXPECT_NE(t.find("PASS"), std::string::npos);
  EXPECT_NE(t.find("FAIL"), std::string::npos);
  EXPECT_EQ(std::count(t.begin(), t.end(), '\n'), 3);  // header + rows
}
