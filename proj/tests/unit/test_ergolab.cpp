#include <gtest/gtest.h>

#include <cmath>

#include "levyshell/ergolab.hpp"
#include "levyshell/errors.hpp"

using namespace levyshell;

TEST(OuSecondMoment, MatchesTheShellSum) {
  ModelParams p;
  p.n = 5;
  const ShellModel m(p);
  const auto spec = LevyMeasureSpec::tempered_stable({});
  const double m2 = moment(spec, 2.0);
  for (double t : {0.1, 1.0, 50.0}) {
    double s = 0.0;
    for (int i = 0; i < 5; ++i) {
      const double r = p.kappa * m.eigenvalue(i);
      s += 2.0 * m.beta(i) * m.beta(i) * m2 * (1.0 - std::exp(-2.0 * r * t)) / (2.0 * r);
    }
    EXPECT_NEAR(ou_second_moment(m, spec, t), s, 1e-12 * s) << "t=" << t;
  }
  EXPECT_EQ(ou_second_moment(m, spec, 0.0), 0.0);
}

TEST(MomentDiagnostics, NoiseOffIsDeterministicDecay) {
  ModelParams p;
  p.n = 4;
  const ShellModel m(p);
  const auto spec = LevyMeasureSpec::tempered_stable({});
  SdePathConfig c;
  c.dt = 0.01;
  c.T = 0.2;
  c.scheme = Scheme::ExponentialEuler;
  ShellState xi(4, {0.0, 0.0});
  xi[0] = {1.0, 0.0};
  EnsembleOptions o;
  o.noise_off = true;
  o.records = 4;
  const EnsembleSummary s = moment_diagnostics(m, spec, c, xi, 2, o);
  ASSERT_EQ(s.rows.size(), 5u);
  EXPECT_EQ(s.failures, 0u);
  EXPECT_FALSE(s.unreliable);
  for (const auto& row : s.rows) {
    EXPECT_NEAR(row.abs2.mean, std::exp(-2.0 * p.kappa * p.eigenvalue(1) * row.t), 1e-12) << row.t;
    EXPECT_NEAR(row.abs2.se, 0.0, 1e-14);
  }
  EXPECT_EQ(s.poincare_violations, 0u);
  EXPECT_THROW(moment_diagnostics(m, spec, c, xi, 3, o), Error);
  o.ensemble = 10;
  EXPECT_THROW(moment_diagnostics(m, spec, c, xi, 2, o), Error);
}

TEST(MomentDiagnostics, FourthMomentDominatesSquaredSecond) {
  ModelParams p;
  p.n = 4;
  const ShellModel m(p);
  const auto spec = LevyMeasureSpec::variance_gamma({});
  SdePathConfig c;
  c.dt = 0.01;
  c.T = 0.5;
  c.seed = 7;
  EnsembleOptions o;
  o.records = 5;
  const EnsembleSummary s = moment_diagnostics(m, spec, c, ShellState(4, {0.2, 0.0}), 4, o);
  EXPECT_EQ(s.sample_count, 1000u);
  EXPECT_TRUE(s.finite);
  for (const auto& row : s.rows) {
    EXPECT_GE(row.abs4.mean, row.abs2.mean * row.abs2.mean * (1 - 1e-12));
    for (std::size_t q = 1; q < kSummaryLevels.size(); ++q) EXPECT_LE(row.abs_quantiles[q - 1], row.abs_quantiles[q]);
  }
  EXPECT_GE(s.envelope_constant, 0.0);
}

TEST(DecayProbe, NeedsASymmetricMeasure) {
  ModelParams p;
  p.n = 4;
  const ShellModel m(p);
  SdePathConfig c;
  EXPECT_THROW(decay_probe(m, LevyMeasureSpec::variance_gamma({0.5, 0.3, 2.0}), c, ShellState(4), {}), Error);
}

TEST(SmallDeviationProbe, WideBandIsCertain) {
  const auto spec = LevyMeasureSpec::tempered_stable({});
  const SmallDeviationProbe r = small_deviation_probe(spec, 1.0, 1e3, 10000, 1e-3, 1);
  EXPECT_EQ(r.probability.successes, 10000u);
  EXPECT_DOUBLE_EQ(r.probability.p_hat, 1.0);
  EXPECT_TRUE(r.probability.excludes_zero);
  EXPECT_EQ(r.verdict.verdict, Verdict::Holds);
  EXPECT_THROW(small_deviation_probe(spec, 1.0, 0.5, 100, 1e-3, 1), Error);
}

TEST(AccessibilityProbeSet, StatesSitOnTheRadius) {
  const auto set = accessibility_probe_set(6, 5.0, 3);
  ASSERT_EQ(set.size(), 6u);
  EXPECT_EQ(norm_sq(set[0]), 0.0);
  for (std::size_t i = 1; i < set.size(); ++i) EXPECT_NEAR(std::sqrt(norm_sq(set[i])), 5.0, 1e-12);
  EXPECT_EQ(set[4][5], std::complex<double>(5.0, 0.0));
  const auto again = accessibility_probe_set(6, 5.0, 3);
  EXPECT_EQ(again.back(), set.back());
}

TEST(InvariantMeasure, EqualStartsAreIndistinguishable) {
  ModelParams p;
  p.n = 4;
  const ShellModel m(p);
  const auto spec = LevyMeasureSpec::tempered_stable({});
  SdePathConfig c;
  c.dt = 0.01;
  c.seed = 5;
  ConvergenceOptions o;
  o.burn_in = 0.1;
  o.horizon = 0.2;
  o.points = 2;
  const ShellState xi(4, {0.5, 0.0});
  const ConvergenceReport r = invariant_measure_convergence(m, spec, c, xi, xi, o);
  ASSERT_EQ(r.series.size(), 6u);
  EXPECT_FALSE(r.unreliable);
  // Six p-values under the null: all above 1e-3 fails with probability below 1%.
  for (const auto& k : r.series) EXPECT_GT(k.p_value, 1e-3) << k.observable << " t=" << k.t;
  o.burn_in = 0.3;
  EXPECT_THROW(invariant_measure_convergence(m, spec, c, xi, xi, o), Error);
}
