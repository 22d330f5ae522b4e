#include <gtest/gtest.h>

#include <cmath>

#include "levyshell/errors.hpp"
#include "levyshell/integrator.hpp"

using namespace levyshell;

namespace {

JumpPath quiet_path(int components, double T) {
  JumpPath p;
  p.horizon = T;
  p.component_count = components;
  p.events.assign(static_cast<std::size_t>(components), {});
  p.small_jump_drift.assign(static_cast<std::size_t>(components), 0.0);
  p.delta_cut = 1e-3;
  return p;
}

double max_diff(const ShellState& a, const ShellState& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(SdePathConfig, Violations) {
  SdePathConfig c;
  EXPECT_TRUE(c.violations().empty());
  EXPECT_EQ(c.regular_steps(), 1000u);
  c.dt = 2.0;
  c.R = -1.0;
  EXPECT_EQ(c.violations().size(), 2u);
  EXPECT_THROW(c.validate(), Error);
  c.dt = 0.3;
  c.R.reset();
  EXPECT_EQ(c.regular_steps(), 4u);
}

TEST(Substeps, EventsSplitTheRegularGrid) {
  const std::vector<NoiseEvent> ev = {{0.1, 0, 1.0}, {0.5, 3, -2.0}};
  const auto s = build_substeps(1.0, 0.3, ev);
  ASSERT_EQ(s.size(), 6u);
  const double ends[] = {0.1, 0.3, 0.5, 0.6, 0.9, 1.0};
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_NEAR(s[i].t_end, ends[i], 1e-15);
    total += s[i].h;
  }
  EXPECT_NEAR(total, 1.0, 1e-15);
  EXPECT_EQ(s[0].event, &ev[0]);
  EXPECT_EQ(s[1].event, nullptr);
  EXPECT_EQ(s[2].event, &ev[1]);
  EXPECT_NEAR(s.back().h, 0.1, 1e-15);
}

TEST(Simulate, SingleShellDecaysAtTheSchemeRate) {
  // One excited shell has no triad partners, so the nonlinearity vanishes.
  ModelParams p;
  p.n = 4;
  const ShellModel m(p);
  SdePathConfig c;
  c.dt = 0.01;
  c.T = 0.1;
  ShellState xi(4, {0.0, 0.0});
  xi[0] = {1.0, 0.5};
  const double r = p.kappa * p.eigenvalue(1);
  for (auto scheme : {Scheme::SemiImplicitEuler, Scheme::ExponentialEuler}) {
    c.scheme = scheme;
    const Trajectory tr = simulate(m, c, xi, quiet_path(8, c.T));
    ASSERT_EQ(tr.states.size(), 11u);
    const double f = scheme == Scheme::ExponentialEuler ? std::exp(-r * c.T) : std::pow(1.0 + r * c.dt, -10.0);
    EXPECT_NEAR(std::abs(tr.states.back()[0] - f * xi[0]), 0.0, 1e-14) << to_string(scheme);
    EXPECT_EQ(std::abs(tr.states.back()[1]), 0.0);
  }
}

TEST(Simulate, JumpsEnterScaledByTheNoiseWeight) {
  ModelParams p;
  p.n = 4;
  const ShellModel m(p);
  SdePathConfig c;
  c.dt = 0.01;
  c.T = 0.1;
  c.scheme = Scheme::ExponentialEuler;
  JumpPath noise = quiet_path(8, c.T);
  noise.events[3].push_back({0.05, 2.0});
  const Trajectory tr = simulate(m, c, ShellState(4, {0.0, 0.0}), noise);
  ASSERT_EQ(tr.states.size(), 10u + 1u + 1u);
  std::size_t k = 0;
  while (tr.jump_component[k] < 0) ++k;
  EXPECT_EQ(tr.jump_component[k], 3);
  EXPECT_DOUBLE_EQ(tr.times[k], 0.05);
  EXPECT_DOUBLE_EQ(tr.states[k][1].imag(), 2.0 * p.noise_weight(2));
  EXPECT_EQ(tr.left_limit(m, k)[1], std::complex<double>(0.0, 0.0));
  const double expected = 2.0 * p.noise_weight(2) * std::exp(-p.kappa * p.eigenvalue(2) * 0.05);
  EXPECT_NEAR(tr.states.back()[1].imag(), expected, 1e-14);
}

TEST(Simulate, RowCountIsRegularStepsPlusEventsPlusOne) {
  ModelParams p;
  p.n = 4;
  const ShellModel m(p);
  SdePathConfig c;
  c.T = 0.1;
  c.seed = 1;
  const auto spec = LevyMeasureSpec::tempered_stable({});
  const JumpPath noise = sample_noise(p, spec, c, 0);
  const Trajectory tr = simulate(m, c, ShellState(4, {0.1, 0.0}), noise);
  EXPECT_EQ(noise.event_count(), 91u);
  EXPECT_EQ(tr.states.size(), c.regular_steps() + noise.event_count() + 1);
  // Frozen values: this path must not change across builds.
  EXPECT_DOUBLE_EQ(tr.states.back()[0].real(), -3.0704764635467812);
  EXPECT_DOUBLE_EQ(tr.states.back()[0].imag(), 0.0095076561604179217);
  EXPECT_DOUBLE_EQ(tr.states.back()[1].real(), 0.022234268702737463);
  EXPECT_DOUBLE_EQ(tr.states.back()[1].imag(), 0.0064117870072106613);
}

TEST(Simulate, NoiseIsAFunctionOfSeedAndStream) {
  ModelParams p;
  p.n = 3;
  SdePathConfig c;
  c.T = 0.5;
  c.seed = 9;
  const auto spec = LevyMeasureSpec::variance_gamma({});
  const auto a = merged_events(sample_noise(p, spec, c, 4));
  const auto b = merged_events(sample_noise(p, spec, c, 4));
  const auto d = merged_events(sample_noise(p, spec, c, 5));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].time, b[i].time);
    EXPECT_EQ(a[i].size, b[i].size);
  }
  EXPECT_FALSE(a.size() == d.size() && a.front().time == d.front().time);
}

TEST(Step, GalerkinStepMatchesOneStepOfSimulate) {
  ModelParams p;
  p.n = 5;
  const ShellModel m(p);
  SdePathConfig c;
  c.dt = 0.05;
  c.T = 0.05;
  c.seed = 2;
  const auto spec = LevyMeasureSpec::tempered_stable({});
  const JumpPath noise = sample_noise(p, spec, c, 0);
  ASSERT_GT(noise.event_count(), 0u);
  const ShellState xi(5, {0.2, -0.1});
  const Trajectory tr = simulate(m, c, xi, noise);
  const auto ev = merged_events(noise);
  const ShellState u = step_galerkin(p, c, xi, 0.0, ev, noise.small_jump_drift.front());
  EXPECT_LT(max_diff(u, tr.states.back()), 1e-15);
  EXPECT_THROW(step_truncated(p, c, xi, 0.0, ev), Error);
  c.R = 100.0;
  const ShellState ut = step_truncated(p, c, xi, 0.0, ev, noise.small_jump_drift.front());
  EXPECT_LT(max_diff(ut, u), 1e-15);
  const std::vector<NoiseEvent> late = {{0.2, 0, 1.0}};
  EXPECT_THROW(step_galerkin(p, c, xi, 0.0, late), Error);
}

TEST(Convolution, SplitsTheSolutionExactlyUnderExponentialEuler) {
  ModelParams p;
  p.n = 6;
  const ShellModel m(p);
  SdePathConfig c;
  c.dt = 0.01;
  c.T = 0.3;
  c.seed = 4;
  c.R = 2.0;
  c.scheme = Scheme::ExponentialEuler;
  const auto spec = LevyMeasureSpec::tempered_stable({});
  const JumpPath noise = sample_noise(p, spec, c, 0);
  const ShellState xi(6, {0.3, 0.1});
  SimulateOptions opt;
  opt.with_convolution = true;
  const Trajectory tr = simulate(m, c, xi, noise, opt);
  const ConvolutionPath conv = ou_convolution(m, c, noise);
  ASSERT_EQ(conv.values.size(), tr.states.size());
  const auto v = solve_v(m, c, conv, xi);
  for (std::size_t k = 0; k < tr.states.size(); ++k) {
    EXPECT_LT(max_diff((*tr.convolution)[k], conv.values[k]), 1e-15);
    ShellState sum = v[k];
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += conv.values[k][i];
    EXPECT_LT(max_diff(sum, tr.states[k]), 1e-12) << "k=" << k;
  }
}

TEST(Refinement, ErrorVanishesAtTheFineModel) {
  ModelParams p;
  SdePathConfig c;
  c.T = 0.5;
  c.seed = 3;
  const auto spec = LevyMeasureSpec::tempered_stable({});
  const RefinementReport r = galerkin_refinement(p, spec, c, {2, 4, 8}, 8, ShellState(8, {0.1, 0.0}), 0);
  ASSERT_EQ(r.l2_error.size(), 3u);
  EXPECT_GT(r.l2_error[0], 0.0);
  EXPECT_EQ(r.l2_error[2], 0.0);
  EXPECT_TRUE(r.monotone);
  EXPECT_THROW(galerkin_refinement(p, spec, c, {1}, 8, ShellState(8), 0), Error);
  EXPECT_THROW(galerkin_refinement(p, spec, c, {2}, 8, ShellState(4), 0), Error);
}

TEST(SupDistance, UsesOnlySharedTimes) {
  const std::vector<double> ta = {0.0, 0.5, 1.0}, tb = {0.0, 0.25, 0.5, 0.75, 1.0};
  const std::vector<ShellState> a = {{{0, 0}}, {{1, 0}}, {{2, 0}}};
  const std::vector<ShellState> b = {{{0, 0}}, {{9, 0}}, {{1, 0}}, {{9, 0}}, {{2, 3}}};
  EXPECT_DOUBLE_EQ(sup_distance_on_common_times(ta, a, tb, b), 3.0);
}
