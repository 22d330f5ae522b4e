#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "levyshell/rng.hpp"
#include "levyshell/stats.hpp"

using namespace levyshell;

TEST(RunningStats, MatchesTwoPassFormulas) {
  const std::vector<double> x = {1.0, 4.0, 4.0, 5.0, 9.0, -2.0};
  RunningStats s;
  for (double v : x) s.add(v);
  EXPECT_EQ(s.count(), 6u);
  EXPECT_DOUBLE_EQ(s.mean(), 3.5);
  EXPECT_NEAR(s.variance(), 13.9, 1e-12);
  EXPECT_NEAR(s.standard_error(), std::sqrt(13.9 / 6), 1e-12);
}

TEST(RunningStats, MergeEqualsSequential) {
  RunningStats all, left, right;
  RngStream rng(3, 0);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * 3 + 1;
    all.add(v);
    (i < 377 ? left : right).add(v);
  }
  left.merge(right);
  EXPECT_EQ(left.count(), all.count());
  EXPECT_NEAR(left.mean(), all.mean(), 1e-12);
  EXPECT_NEAR(left.variance(), all.variance(), 1e-10);
}

TEST(Wilson, ZeroSuccessesStartsAtZero) {
  const Interval w = wilson_interval(0, 10);
  EXPECT_DOUBLE_EQ(w.lower, 0.0);
  EXPECT_NEAR(w.upper, 0.27753279986288693, 1e-12);
}

TEST(Wilson, SymmetricAtOneHalf) {
  const Interval w = wilson_interval(50, 100);
  EXPECT_NEAR(w.lower + w.upper, 1.0, 1e-12);
  EXPECT_NEAR(w.lower, 0.4038315303659956, 1e-12);
}

TEST(KolmogorovSmirnov, IdenticalSamplesGiveZero) {
  std::vector<double> a = {0.3, 0.1, 0.7, 0.2, 0.9};
  const KsResult r = ks_two_sample(a, a);
  EXPECT_DOUBLE_EQ(r.statistic, 0.0);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);
}

TEST(KolmogorovSmirnov, DisjointSamplesGiveOne) {
  std::vector<double> a(200), b(200);
  for (int i = 0; i < 200; ++i) {
    a[static_cast<std::size_t>(i)] = i;
    b[static_cast<std::size_t>(i)] = 1000 + i;
  }
  const KsResult r = ks_two_sample(a, b);
  EXPECT_DOUBLE_EQ(r.statistic, 1.0);
  EXPECT_LT(r.p_value, 1e-20);
}

TEST(KolmogorovSmirnov, SurvivalFunctionKnownValues) {
  EXPECT_NEAR(kolmogorov_survival(1.3580986393225507), 0.05, 1e-6);
  EXPECT_NEAR(kolmogorov_survival(1.6276236115189502), 0.01, 1e-6);
}

TEST(ChiSquared, PoissonSampleFits) {
  RngStream rng(4, 0);
  std::vector<std::uint64_t> counts;
  const double mean = 6.5;
  for (int i = 0; i < 5000; ++i) {
    // Poisson by exponential interarrivals.
    double t = rng.exponential();
    std::uint64_t k = 0;
    while (t < mean) {
      ++k;
      t += rng.exponential();
    }
    counts.push_back(k);
  }
  const ChiSquaredResult fit = chi_squared_poisson(counts, mean);
  EXPECT_GT(fit.p_value, 0.01);
  EXPECT_GT(fit.degrees_of_freedom, 5);
  EXPECT_LT(chi_squared_poisson(counts, 8.0).p_value, 1e-6);
}

TEST(LeastSquares, ExactLine) {
  const std::vector<double> x = {0, 1, 2, 3}, y = {1, 3, 5, 7};
  const LinearFit f = least_squares(x, y);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.slope_se, 0.0, 1e-12);
}

TEST(Quantile, LinearInterpolation) {
  const std::vector<double> x = {4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(quantile(x, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(x, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile(x, 0.5), 2.5);
}
