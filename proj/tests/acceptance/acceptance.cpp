// Acceptance checks 1-10. Prints one verdict line per criterion and exits
// nonzero when any selected criterion fails.
//
//   levyshell_acceptance            run every criterion
//   levyshell_acceptance 3 7        run criteria 3 and 7

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "levyshell/bel.hpp"
#include "levyshell/ergolab.hpp"
#include "levyshell/integrator.hpp"
#include "levyshell/levy.hpp"
#include "levyshell/parallel.hpp"
#include "levyshell/shell.hpp"
#include "levyshell/stats.hpp"

using namespace levyshell;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ShellState broadcast(int n, std::complex<double> z) { return ShellState(static_cast<std::size_t>(n), z); }

// 1. |<B(u,v),v>| <= 1e-12 C1 ||u|| |v|^2 on random pairs.
Outcome energy_pairing() {
  double worst = 0.0;
  for (auto kind : {ShellModelKind::GOY, ShellModelKind::SABRA}) {
    for (int n : {8, 32, 64}) {
      ModelParams p;
      p.model = kind;
      p.n = n;
      const ShellModel model(p);
      RngStream rng(1, derive_stream_id(stream_purpose::constants, static_cast<std::uint64_t>(n)));
      const double C1 = estimate_bilinear_constants(p, 2000, rng).C1;
      for (int k = 0; k < 1000; ++k) {
        const ShellState u = random_state(n, rng);
        const ShellState v = random_state(n, rng);
        const double pairing = std::fabs(inner(model.bilinear(u, v), v));
        const double bound = 1e-12 * C1 * std::sqrt(model.v_norm_sq(u)) * norm_sq(v);
        worst = std::max(worst, pairing / bound);
      }
    }
  }
  return {worst <= 1.0, "worst |<B(u,v),v>| / bound = " + fmt("%.3g", worst) + " over 6000 pairs"};
}

// 2. BEL against common-random-number finite differences. A (seed, phi)
// gradient agrees when every coordinate lies within 3 combined SE.
Outcome bel_vs_fd() {
  std::ostringstream detail;
  bool pass = true;
  for (int n : {2, 3}) {
    ModelParams p;
    p.n = n;
    const ShellModel model(p);
    const auto spec = LevyMeasureSpec::tempered_stable({});
    SdePathConfig cfg;
    cfg.dt = 0.05;
    cfg.T = 0.5;
    cfg.delta_cut = 1e-2;
    cfg.R = 1.0;
    const ShellState x = broadcast(n, {0.3, 0.3});
    const int dim = real_dimension(n);
    std::vector<double> weights(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) weights[static_cast<std::size_t>(i)] = 1.0 - 0.3 * i;
    BelCheckOptions opts;
    opts.phis = {TestFunctionSpec::cosine_of_coordinate(1, 1.0),
                 TestFunctionSpec::bump_of_norm_sq(std::vector<double>(static_cast<std::size_t>(dim), 0.0), 1.0),
                 TestFunctionSpec::logistic_of_linear(weights)};
    opts.M = 100000;
    opts.workers = default_worker_count();
    int agree = 0, total = 0, coord_agree = 0, coord_total = 0;
    for (std::uint64_t seed = 1000; seed < 1020; ++seed) {
      cfg.seed = seed;
      const BelCheckResult res = bel_check(model, spec, cfg, x, opts);
      for (const auto& est : res.estimates) {
        bool ok = true;
        for (std::size_t k = 0; k < est.bel.size(); ++k) {
          const double se = std::hypot(est.bel[k].se, est.fd[k].se);
          const bool within = std::fabs(est.bel[k].mean - est.fd[k].mean) <= 3.0 * se;
          ok = ok && within;
          coord_agree += within;
          ++coord_total;
        }
        agree += ok;
        ++total;
      }
    }
    const double frac = static_cast<double>(agree) / total;
    pass = pass && frac >= 0.95;
    detail << "n=" << n << ": " << agree << "/" << total << " (seed, phi) gradients agree, " << coord_agree << "/"
           << coord_total << " coordinates; ";
  }
  return {pass, detail.str()};
}

// 3. int d/dz (z^2 g) dz = 0 by quadrature.
Outcome compensator_cancellation() {
  std::vector<LevyMeasureSpec> specs = {
      LevyMeasureSpec::tempered_stable({1.0, 1.0, 1.0, 1.0, 0.5}),
      LevyMeasureSpec::tempered_stable({2.0, 0.5, 3.0, 0.7, 0.2}),
      LevyMeasureSpec::tempered_stable({0.3, 1.5, 0.5, 2.0, 0.9}),
      LevyMeasureSpec::variance_gamma({1.0, 0.0, 1.0}),
      LevyMeasureSpec::variance_gamma({0.5, 0.3, 2.0}),
      LevyMeasureSpec::variance_gamma({2.0, -0.5, 0.25}),
  };
  double worst = 0.0;
  for (const auto& s : specs) worst = std::max(worst, std::fabs(compensator_integral(s)));
  return {worst <= 1e-8, "max |integral| = " + fmt("%.3g", worst) + " over 3 tempered-stable and 3 variance-gamma specs"};
}

// 4. Direct truncated integrator against v + S from the split solvers.
Outcome decomposition() {
  ModelParams p;
  p.n = 16;
  const ShellModel model(p);
  const auto spec = LevyMeasureSpec::tempered_stable({});
  SdePathConfig cfg;
  cfg.dt = 1e-3;
  cfg.T = 1.0;
  cfg.R = 1.0;
  cfg.seed = 4;
  SdePathConfig half = cfg;
  half.dt = cfg.dt / 2;
  const ShellState xi = broadcast(16, {0.1, 0.0});
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const JumpPath noise = sample_noise(p, spec, cfg, derive_stream_id(stream_purpose::trajectory, i));
    const Trajectory u = simulate(model, cfg, xi, noise);
    const Trajectory uh = simulate(model, half, xi, noise);
    const ConvolutionPath S = ou_convolution(model, cfg, noise);
    const std::vector<ShellState> v = solve_v(model, cfg, S, xi);
    std::vector<ShellState> split(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
      split[k] = v[k];
      for (std::size_t j = 0; j < v[k].size(); ++j) split[k][j] += S.values[k][j];
    }
    const double d_split = sup_distance_on_common_times(u.times, u.states, S.times, split);
    const double d_half = sup_distance_on_common_times(u.times, u.states, uh.times, uh.states);
    worst = std::max(worst, d_split / d_half);
  }
  return {worst <= 10.0, "worst sup|u - (v+S)| / dt-halving error = " + fmt("%.3g", worst) + " over 20 paths"};
}

// 5. Full and truncated runs agree bitwise until |u|^2 first exceeds R.
Outcome truncation_agreement() {
  ModelParams p;
  p.n = 16;
  const ShellModel model(p);
  const auto spec = LevyMeasureSpec::tempered_stable({});
  SdePathConfig full;
  full.T = 1.0;
  full.dt = 1e-3;
  full.seed = 5;
  SdePathConfig trunc = full;
  trunc.R = 0.5;
  const ShellState xi = broadcast(16, {0.1, 0.0});
  int exited = 0, mismatched = 0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const JumpPath noise = sample_noise(p, spec, full, derive_stream_id(stream_purpose::trajectory, i));
    const Trajectory a = simulate(model, full, xi, noise);
    const Trajectory b = simulate(model, trunc, xi, noise);
    bool inside = true;
    for (std::size_t k = 0; k < b.states.size() && inside; ++k) {
      if (a.states[k] != b.states[k]) {
        ++mismatched;
        break;
      }
      // The step leaving the ball starts inside it, so its result must agree too.
      if (norm_sq(b.states[k]) > *trunc.R) {
        inside = false;
        ++exited;
      }
    }
  }
  return {mismatched == 0, std::to_string(mismatched) + "/50 paths differ before the first exit; " +
                               std::to_string(exited) + " paths left the ball"};
}

// 6. a = b = 0: OU second moments and the diagonal Jacobian.
Outcome linear_closed_form() {
  ModelParams p;
  p.n = 8;
  p.a = 0.0;
  p.b = 0.0;
  const ShellModel model(p);
  const auto spec = LevyMeasureSpec::tempered_stable({});
  SdePathConfig cfg;
  cfg.T = 1.0;
  cfg.dt = 1e-3;
  cfg.seed = 6;
  cfg.scheme = Scheme::ExponentialEuler;
  EnsembleOptions eo;
  eo.ensemble = 10000;
  eo.records = 10;
  eo.workers = default_worker_count();
  const EnsembleSummary s = moment_diagnostics(model, spec, cfg, broadcast(8, {0.0, 0.0}), 2, eo);
  double worst_z = 0.0;
  for (const auto& row : s.rows) {
    if (row.t == 0.0) continue;
    worst_z = std::max(worst_z, std::fabs(row.abs2.mean - ou_second_moment(model, spec, row.t)) / row.abs2.se);
  }

  const JumpPath noise = sample_noise(p, spec, cfg, derive_stream_id(stream_purpose::trajectory, 0));
  const Trajectory tr = simulate(model, cfg, broadcast(8, {0.1, -0.1}), noise);
  const JacobianFlow J = jacobian_flow(model, cfg, tr);
  double worst_jac = 0.0;
  for (std::size_t i = 0; i < J.times.size(); ++i)
    for (int r = 0; r < J.dim; ++r)
      for (int c = 0; c < J.dim; ++c) {
        const double exact = r == c ? std::exp(-model.kappa() * model.eigenvalue(r / 2) * J.times[i]) : 0.0;
        worst_jac = std::max(worst_jac, std::fabs(J.U(i, c, r) - exact));
      }
  return {worst_z <= 3.0 && worst_jac <= 1e-10,
          "worst |E|u|^2 - closed form| = " + fmt("%.3g", worst_z) + " SE over 1e4 paths; max Jacobian error " +
              fmt("%.3g", worst_jac)};
}

double normal_two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

// 7. Poisson counts and jump-size moments of the compound Poisson sampler.
Outcome sampler_statistics() {
  std::ostringstream detail;
  bool pass = true;
  const std::vector<std::pair<const char*, LevyMeasureSpec>> specs = {
      {"tempered-stable", LevyMeasureSpec::tempered_stable({})},
      {"variance-gamma", LevyMeasureSpec::variance_gamma({})},
  };
  const double delta = 1e-3, T = 1.0;
  for (const auto& [name, spec] : specs) {
    const JumpSampler sampler(spec, delta);
    std::vector<std::uint64_t> counts;
    RunningStats z1, z2;
    for (std::uint64_t i = 0; i < 5000; ++i) {
      RngStream rng(7, derive_stream_id(stream_purpose::sampler_check, i));
      const JumpPath path = sampler.sample(T, 1, rng);
      counts.push_back(path.events[0].size());
      for (const auto& e : path.events[0]) {
        z1.add(e.size);
        z2.add(e.size * e.size);
      }
    }
    const double rate = sampler.rate();
    const ChiSquaredResult chi = chi_squared_poisson(counts, rate * T);
    const double m1 = signed_moment(spec, 1.0, delta, INFINITY) / rate;
    const double m2 = moment_restricted(spec, 2.0, delta, INFINITY) / rate;
    const double p1 = normal_two_sided_p((z1.mean() - m1) / z1.standard_error());
    const double p2 = normal_two_sided_p((z2.mean() - m2) / z2.standard_error());
    pass = pass && chi.p_value > 0.01 && p1 > 0.01 && p2 > 0.01;
    detail << name << ": count chi2 p=" << fmt("%.3g", chi.p_value) << ", mean p=" << fmt("%.3g", p1)
           << ", second moment p=" << fmt("%.3g", p2) << "; ";
  }
  return {pass, detail.str()};
}

// 8. Small-deviation verdict and the accessibility probe on 16 shells.
Outcome small_deviation_accessibility() {
  const auto vg = LevyMeasureSpec::variance_gamma({1.0, 0.0, 1.0});
  const SmallDeviationVerdict v = small_deviation_verdict(vg);

  ModelParams p;
  p.n = 16;
  const ShellModel model(p);
  // Quiet symmetric variance gamma: the small-convolution event must be seen
  // over the long T0 horizon.
  const auto quiet = LevyMeasureSpec::variance_gamma({0.01, 0.0, 1.0});
  SdePathConfig cfg;
  cfg.dt = 1e-3;
  cfg.seed = 8;
  AccessibilityOptions ao;
  ao.samples = 1000;
  ao.radius = 5.0;
  ao.gamma = 1.0;
  ao.workers = default_worker_count();
  const AccessibilityReport a = accessibility_probe(model, quiet, cfg, accessibility_probe_set(16, 5.0, 8), ao);
  const bool pass = v.verdict == Verdict::Holds && a.convolution_small.excludes_zero && a.conditional_wilson.lower >= 0.99;
  std::ostringstream d;
  d << "verdict " << to_string(v.verdict) << "; T0=" << fmt("%.4g", a.T0) << " eps=" << fmt("%.4g", a.epsilon)
    << "; P(sup|S|<eps) Wilson [" << fmt("%.3g", a.convolution_small.wilson.lower) << ", "
    << fmt("%.3g", a.convolution_small.wilson.upper) << "]; conditional success " << a.successes << "/"
    << a.convolution_small.successes << ", Wilson lower " << fmt("%.4g", a.conditional_wilson.lower);
  return {pass, d.str()};
}

// 9. KS p-values at t = 5/(kappa lambda_1) for ensembles from 0 and 10 e_1.
Outcome ergodicity() {
  ModelParams p;  // SABRA defaults, 32 shells
  const ShellModel model(p);
  const auto spec = LevyMeasureSpec::tempered_stable({});
  SdePathConfig cfg;
  cfg.dt = 1e-3;
  cfg.seed = 9;
  ShellState xi_b = broadcast(p.n, {0.0, 0.0});
  xi_b[0] = 10.0;
  ConvergenceOptions co;
  co.ensemble = 1000;
  co.burn_in = 5.0 / (model.kappa() * model.eigenvalue(0));
  co.horizon = co.burn_in;
  co.points = 1;
  co.workers = default_worker_count();
  int passed = 0;
  double worst = 1.0;
  for (std::uint64_t r = 0; r < 10; ++r) {
    co.replicate = r;
    const ConvergenceReport rep =
        invariant_measure_convergence(model, spec, cfg, broadcast(p.n, {0.0, 0.0}), xi_b, co);
    const double pmin = rep.min_p_value_at(co.burn_in);
    passed += pmin > 0.01;
    worst = std::min(worst, pmin);
  }
  return {passed >= 9, std::to_string(passed) + "/10 replicates with every KS p-value > 0.01 at t=" +
                           fmt("%.4g", co.burn_in) + " (smallest p " + fmt("%.3g", worst) + ")"};
}

std::string slurp(const std::filesystem::path& f) {
  std::ifstream in(f, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 10. Reruns through the command-line entry point give identical bytes.
Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "levyshell_acceptance_10";
  fs::remove_all(root);
  fs::create_directories(root);
  struct Case {
    const char* command;
    const char* config;
    const char* file;
  };
  const std::vector<Case> cases = {
      {"simulate",
       R"({"model":{"n":8},"seed":10,"experiment":{"name":"simulate","with_convolution":true,"ensemble":1000,"records":5}})",
       "trajectory.csv"},
      {"bel-check",
       R"({"model":{"n":2},"noise":{"delta_cut":0.01},"integrator":{"dt":0.05,"T":0.5,"R":1.0},"seed":10,"experiment":{"name":"bel-check","M":2000}})",
       "bel.jsonl"},
      {"noise-check", R"({"noise":{"family":"VarianceGamma"},"seed":10,"experiment":{"name":"noise-check"}})", "noise.csv"},
      {"refine", R"({"model":{"n":12},"seed":10,"experiment":{"name":"refine"}})", "refine.csv"},
  };
  int identical = 0;
  std::ostringstream sink;
  for (const auto& c : cases) {
    const fs::path cfg = root / (std::string(c.command) + ".json");
    std::ofstream(cfg) << c.config;
    std::vector<std::string> outputs;
    for (const char* workers : {"1", "2", "1"}) {
      const fs::path out = root / (std::string(c.command) + "_" + std::to_string(outputs.size()));
      const std::string cfg_s = cfg.string(), out_s = out.string();
      const char* argv[] = {"levyshell", c.command, "--config", cfg_s.c_str(), "--out", out_s.c_str(), "--workers", workers};
      if (levyshell::cli::run_cli(8, argv, sink, sink) != 0) return {false, std::string(c.command) + " failed"};
      outputs.push_back(slurp(out / c.file));
    }
    const bool same = !outputs[0].empty() && outputs[0] == outputs[1] && outputs[0] == outputs[2];
    identical += same;
  }
  fs::remove_all(root);
  return {identical == static_cast<int>(cases.size()),
          std::to_string(identical) + "/" + std::to_string(cases.size()) +
              " subcommands byte-identical over three runs (1, 2, 1 workers)"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "energy pairing", 5, energy_pairing},
      {2, "BEL vs FD", 600, bel_vs_fd},
      {3, "compensator cancellation", 1, compensator_cancellation},
      {4, "decomposition oracle", 60, decomposition},
      {5, "truncation agreement", 60, truncation_agreement},
      {6, "linear closed form", 120, linear_closed_form},
      {7, "sampler statistics", 60, sampler_statistics},
      {8, "small deviation and accessibility", 300, small_deviation_accessibility},
      {9, "ergodicity probe", 900, ergodicity},
      {10, "determinism", 300, determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  bool all_pass = true;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs < c.budget_s;
    const bool pass = v.pass && in_budget;
    all_pass = all_pass && pass;
    std::printf("criterion %d: %s  %s: %s [%.1f s of %.0f s%s]\n", c.id, pass ? "PASS" : "FAIL", c.name,
                v.detail.c_str(), secs, c.budget_s, in_budget ? "" : ", over budget");
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
