#include <gtest/gtest.h>

#include <cmath>

#include "levyshell/bel.hpp"
#include "levyshell/errors.hpp"

using namespace levyshell;

namespace {

SdePathConfig small_config(std::uint64_t seed) {
  SdePathConfig c;
  c.dt = 0.05;
  c.T = 0.5;
  c.delta_cut = 1e-2;
  c.R = 1.0;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(TestFunctions, GradientsMatchFiniteDifferences) {
  const std::vector<double> x = {0.3, -0.2, 0.5, 0.1};
  const std::vector<TestFunctionSpec> phis = {
      TestFunctionSpec::bump_of_norm_sq({0.1, 0.0, 0.2, -0.3}, 0.8),
      TestFunctionSpec::cosine_of_coordinate(3, 2.0),
      TestFunctionSpec::logistic_of_linear({1.0, -0.5, 0.25, 2.0}),
      TestFunctionSpec::cosine_of_coordinate(1, 1.0).scaled(3.0),
  };
  for (const auto& phi : phis) {
    std::vector<double> g;
    phi.gradient(x, g);
    ASSERT_EQ(g.size(), x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      auto xp = x, xm = x;
      xp[k] += 1e-6;
      xm[k] -= 1e-6;
      EXPECT_NEAR(g[k], (phi.value(xp) - phi.value(xm)) / 2e-6, 1e-8) << phi.name() << " k=" << k;
    }
  }
  EXPECT_DOUBLE_EQ(phis[3].sup_norm(), 3.0);
  EXPECT_TRUE(TestFunctionSpec::constant(2.0).is_constant());
  EXPECT_THROW(TestFunctionSpec::cosine_of_coordinate(0, 1.0), Error);
  EXPECT_THROW(TestFunctionSpec::bump_of_norm_sq({0.0}, 0.0), Error);
}

TEST(JumpScore, MatchesLogDensityDerivative) {
  for (const auto& spec : {LevyMeasureSpec::tempered_stable({}), LevyMeasureSpec::variance_gamma({0.5, 0.3, 2.0})}) {
    for (double z : {-0.7, -0.05, 0.02, 0.4, 1.5}) {
      const double h = 1e-6 * std::fabs(z);
      const double dlog = (std::log(density(spec, z + h)) - std::log(density(spec, z - h))) / (2 * h);
      EXPECT_NEAR(jump_score(spec, z), z * z * dlog + 2 * z, 1e-6 * (1 + std::fabs(z))) << "z=" << z;
    }
  }
}

TEST(Jacobian, MatchesFiniteDifferencesOfTheFlow) {
  ModelParams p;
  p.n = 3;
  const ShellModel m(p);
  const auto spec = LevyMeasureSpec::tempered_stable({});
  for (const bool truncated : {true, false}) {
    SdePathConfig c = small_config(5);
    if (!truncated) c.R.reset();
    const JumpPath noise = sample_noise(p, spec, c, 0);
    const ShellState x = {{0.3, 0.3}, {-0.2, 0.1}, {0.1, 0.05}};
    const Trajectory tr = simulate(m, c, x, noise);
    const JacobianFlow jac = jacobian_flow(m, c, tr);
    ASSERT_EQ(jac.D.size(), tr.times.size());
    const std::size_t last = tr.times.size() - 1;
    const double h = 1e-6;
    for (int k = 0; k < 6; ++k) {
      ShellState xp = x, xm = x;
      coordinate(xp, k) += h;
      coordinate(xm, k) -= h;
      const ShellState up = simulate(m, c, xp, noise).states.back();
      const ShellState um = simulate(m, c, xm, noise).states.back();
      for (int j = 0; j < 6; ++j)
        EXPECT_NEAR(jac.U(last, k, j), (coordinate(up, j) - coordinate(um, j)) / (2 * h), 1e-7)
            << "R " << truncated << " k=" << k << " j=" << j;
    }
  }
}

TEST(BelWeights, AIsTheSumOfSquaredJumps) {
  ModelParams p;
  p.n = 2;
  const ShellModel m(p);
  const auto spec = LevyMeasureSpec::tempered_stable({});
  const SdePathConfig c = small_config(6);
  const JumpPath noise = sample_noise(p, spec, c, 0);
  const Trajectory tr = simulate(m, c, ShellState(2, {0.3, 0.3}), noise);
  const BelWeights w = bel_weights(m, tr, jacobian_flow(m, c, tr), spec);
  double A = 0.0;
  for (const auto& comp : noise.events)
    for (const auto& e : comp) A += e.size * e.size;
  EXPECT_NEAR(w.A, A, 1e-14 * A);
  EXPECT_FALSE(w.rejected);
  EXPECT_EQ(w.K.size(), 4u);
}

TEST(BelCheck, FrozenEstimateAndWorkerIndependence) {
  ModelParams p;
  p.n = 2;
  const ShellModel m(p);
  const auto spec = LevyMeasureSpec::tempered_stable({});
  BelCheckOptions o;
  o.phis = {TestFunctionSpec::cosine_of_coordinate(1, 1.0)};
  o.M = 1000;
  const BelCheckResult r1 = bel_check(m, spec, small_config(3), ShellState(2, {0.3, 0.3}), o);
  const auto& e = r1.estimates[0];
  ASSERT_EQ(e.bel.size(), 4u);
  EXPECT_DOUBLE_EQ(e.bel[0].mean, 0.0033984432882934682);
  EXPECT_DOUBLE_EQ(e.bel[0].se, 0.03793873577711062);
  EXPECT_DOUBLE_EQ(e.bel[1].mean, 0.040288004583149288);
  o.workers = 3;
  const BelCheckResult r3 = bel_check(m, spec, small_config(3), ShellState(2, {0.3, 0.3}), o);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(r3.estimates[0].bel[k].mean, e.bel[k].mean);
    EXPECT_EQ(r3.estimates[0].fd[k].mean, e.fd[k].mean);
  }
}

TEST(BelCheck, LinearModelAgreesWithPathwiseGradient) {
  ModelParams p;
  p.n = 2;
  p.a = 0.0;
  p.b = 0.0;
  const ShellModel m(p);
  const auto spec = LevyMeasureSpec::tempered_stable({});
  BelCheckOptions o;
  o.phis = {TestFunctionSpec::cosine_of_coordinate(2, 1.0)};
  o.M = 20000;
  o.fd_step = 0.0;
  const auto r = bel_check(m, spec, small_config(11), ShellState(2, {0.3, 0.3}), o);
  const auto& e = r.estimates[0];
  for (std::size_t k = 0; k < 4; ++k) {
    const double se = std::hypot(e.bel[k].se, e.pathwise[k].se);
    EXPECT_LT(std::fabs(e.bel[k].mean - e.pathwise[k].mean), 4 * se + 1e-12) << "k=" << k;
  }
  // In the linear model the flow is diagonal, so only the differentiated coordinate moves.
  EXPECT_EQ(e.pathwise[0].mean, 0.0);
  EXPECT_NE(e.pathwise[1].mean, 0.0);
}

TEST(BelCheck, RejectsWhenJumpsAreTooRare) {
  ModelParams p;
  p.n = 2;
  const ShellModel m(p);
  const auto spec = LevyMeasureSpec::tempered_stable({});
  SdePathConfig c = small_config(1);
  c.delta_cut = 50.0;
  BelCheckOptions o;
  o.phis = {TestFunctionSpec::cosine_of_coordinate(1, 1.0)};
  try {
    bel_check(m, spec, c, ShellState(2, {0.3, 0.3}), o);
    FAIL() << "expected Infeasible";
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::Infeasible);
  }
  o.M = 10;
  EXPECT_THROW(bel_check(m, spec, small_config(1), ShellState(2, {0.3, 0.3}), o), Error);
}

TEST(GradientBound, ScalesWithTheTestFunction) {
  ModelParams p;
  p.n = 2;
  const ShellModel m(p);
  const auto spec = LevyMeasureSpec::tempered_stable({});
  const TestFunctionSpec phi = TestFunctionSpec::logistic_of_linear({1.0, 0.5, -0.5, 0.2});
  BelCheckOptions o;
  o.phis = {phi, phi.scaled(10.0)};
  o.M = 1000;
  o.fd_step = 0.0;
  const SdePathConfig c = small_config(2);
  const auto r = bel_check(m, spec, c, ShellState(2, {0.3, 0.3}), o);
  const auto b1 = gradient_bound_check(m, spec, c, r.estimates[0], o.phis[0], r.flow, c.T);
  const auto b10 = gradient_bound_check(m, spec, c, r.estimates[1], o.phis[1], r.flow, c.T);
  EXPECT_GT(b1.rhs, 0.0);
  EXPECT_NEAR(b10.lhs, 10 * b1.lhs, 1e-12 * b10.lhs);
  EXPECT_NEAR(b10.rhs, 10 * b1.rhs, 1e-12 * b10.rhs);
  EXPECT_EQ(b1.holds, b10.holds);
}
