#include <benchmark/benchmark.h>

#include "levyshell/integrator.hpp"
#include "levyshell/levy.hpp"
#include "levyshell/shell.hpp"

using namespace levyshell;

static void BM_Bilinear(benchmark::State& state) {
  ModelParams p;
  p.n = static_cast<int>(state.range(0));
  const ShellModel m(p);
  RngStream rng(1, 0);
  const ShellState u = random_state(p.n, rng), v = random_state(p.n, rng);
  ShellState out;
  for (auto _ : state) {
    m.bilinear(u, v, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_Bilinear)->Arg(8)->Arg(32)->Arg(64);

static void BM_SampleJumps(benchmark::State& state) {
  const auto spec = LevyMeasureSpec::tempered_stable({});
  const JumpSampler sampler(spec, 1e-3);
  RngStream rng(2, 0);
  std::vector<NoiseEvent> events;
  for (auto _ : state) {
    sampler.sample_merged(1.0, 64, rng, events);
    benchmark::DoNotOptimize(events.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(events.size()));
}
BENCHMARK(BM_SampleJumps);

static void BM_SimulatePath(benchmark::State& state) {
  ModelParams p;
  p.n = static_cast<int>(state.range(0));
  const ShellModel m(p);
  SdePathConfig c;
  c.T = 0.1;
  c.seed = 3;
  const auto spec = LevyMeasureSpec::tempered_stable({});
  const JumpPath noise = sample_noise(p, spec, c, 0);
  const ShellState xi(static_cast<std::size_t>(p.n), {0.1, 0.0});
  for (auto _ : state) {
    const Trajectory tr = simulate(m, c, xi, noise);
    benchmark::DoNotOptimize(tr.states.back().data());
  }
}
BENCHMARK(BM_SimulatePath)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
