#include <benchmark/benchmark.h>

#include "levyshell/bel.hpp"

using namespace levyshell;

static void BM_BelGradient(benchmark::State& state) {
  ModelParams p;
  p.n = static_cast<int>(state.range(0));
  const ShellModel m(p);
  SdePathConfig c;
  c.dt = 0.05;
  c.T = 0.5;
  c.delta_cut = 1e-2;
  c.R = 1.0;
  c.seed = 1;
  const auto spec = LevyMeasureSpec::tempered_stable({});
  const auto phi = TestFunctionSpec::cosine_of_coordinate(1, 1.0);
  const ShellState x(static_cast<std::size_t>(p.n), {0.3, 0.3});
  for (auto _ : state) {
    const BelEstimate e = bel_gradient(m, spec, c, x, c.T, phi, 1000);
    benchmark::DoNotOptimize(e.bel.data());
  }
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_BelGradient)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

static void BM_JacobianFlow(benchmark::State& state) {
  ModelParams p;
  p.n = 3;
  const ShellModel m(p);
  SdePathConfig c;
  c.dt = 0.05;
  c.T = 0.5;
  c.delta_cut = 1e-2;
  c.R = 1.0;
  c.seed = 2;
  const auto spec = LevyMeasureSpec::tempered_stable({});
  const Trajectory tr = simulate(m, c, ShellState(3, {0.3, 0.3}), sample_noise(p, spec, c, 0));
  for (auto _ : state) {
    const JacobianFlow j = jacobian_flow(m, c, tr);
    benchmark::DoNotOptimize(j.D.back().data());
  }
}
BENCHMARK(BM_JacobianFlow);
