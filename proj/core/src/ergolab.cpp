#include "levyshell/ergolab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "levyshell/errors.hpp"
#include "levyshell/parallel.hpp"

namespace levyshell {

namespace {

Estimate estimate_of(const RunningStats& s) { return {s.mean(), s.standard_error()}; }

// Regular step indices (1-based) at which an ensemble records its state.
std::vector<std::size_t> record_steps(std::size_t regular_steps, int records) {
  std::vector<std::size_t> out;
  if (records <= 0 || regular_steps == 0) return out;
  for (int k = 1; k <= records; ++k) {
    const auto s = static_cast<std::size_t>(std::llround(static_cast<double>(k) * static_cast<double>(regular_steps) /
                                                         static_cast<double>(records)));
    if (s >= 1 && (out.empty() || s > out.back())) out.push_back(s);
  }
  return out;
}

double regular_time(const SdePathConfig& config, std::size_t step) {
  return std::min(static_cast<double>(step) * config.dt, config.T);
}

// Integrates one path along the merged events. before(st, u) sees the state at
// the start of each substep, after(st, u, regular_index) the state at its end;
// regular_index counts regular grid times and is 0 on event substeps.
// Returns false when the path leaves the blow-up ball.
template <class Before, class After>
bool integrate_path(const Stepper& stepper, const SdePathConfig& config, std::span<const NoiseEvent> events,
                    ShellState& u, ShellState& scratch, Before&& before, After&& after) {
  bool ok = true;
  std::size_t regular = 0;
  for_each_substep(config.T, config.dt, events, [&](const Substep& st) {
    if (!ok) return;
    before(st, u);
    stepper.advance(u, st.h, scratch);
    if (st.event) stepper.apply_jump(u, st.event->component, st.event->size);
    const double nrm = norm_sq(u);
    if (!std::isfinite(nrm) || nrm > kBlowUpNorm * kBlowUpNorm) {
      ok = false;
      return;
    }
    after(st, u, st.event ? std::size_t{0} : ++regular);
  });
  return ok;
}

struct PathRecord {
  bool failed = false;
  std::vector<double> abs2, vnorm2, sup_p, dissipation;
  std::size_t poincare_violations = 0;
};

}  // namespace

double ou_second_moment(const ShellModel& model, const LevyMeasureSpec& spec, double t) {
  const double m2 = moment(spec, 2.0);
  double total = 0.0;
  for (int i = 0; i < model.shells(); ++i) {
    const double r = model.kappa() * model.eigenvalue(i);
    const double b = model.beta(i);
    // Two real coordinates per shell.
    total += 2.0 * b * b * m2 * (-std::expm1(-2.0 * r * t)) / (2.0 * r);
  }
  return total;
}

EnsembleSummary moment_diagnostics(const ShellModel& model, const LevyMeasureSpec& spec, const SdePathConfig& config,
                                   const ShellState& xi, int p, const EnsembleOptions& options) {
  config.validate();
  if (p != 2 && p != 4) throw Error(ErrorKind::Domain, "moment_diagnostics: p must be 2 or 4");
  if (options.ensemble < 1000) throw Error(ErrorKind::Domain, "moment_diagnostics: ensemble must be >= 1000");
  if (static_cast<int>(xi.size()) != model.shells())
    throw Error(ErrorKind::Shape, "moment_diagnostics: xi length differs from model.n");

  const int n = model.shells();
  const int d = real_dimension(n);
  const JumpSampler sampler(spec, config.delta_cut);
  const double drift = options.noise_off ? 0.0 : sampler.small_jump_drift();
  const Stepper stepper(model, config.scheme, config.R, drift);
  const auto steps = record_steps(config.regular_steps(), options.records);
  const double lambda1 = model.eigenvalue(0);
  const double half_p = 0.5 * static_cast<double>(p);

  std::vector<PathRecord> paths(options.ensemble);
  parallel_for(options.ensemble, options.workers, [&](std::size_t idx) {
    PathRecord& rec = paths[idx];
    std::vector<NoiseEvent> events;
    if (!options.noise_off) {
      RngStream rng(config.seed, derive_stream_id(options.stream_purpose, idx));
      sampler.sample_merged(config.T, d, rng, events);
    }
    ShellState u = xi, scratch;
    double sup = std::pow(norm_sq(u), half_p);
    double diss = 0.0;
    std::size_t next = 0;
    const auto record = [&](const ShellState& s) {
      const double h2 = norm_sq(s), v2 = model.v_norm_sq(s);
      rec.abs2.push_back(h2);
      rec.vnorm2.push_back(v2);
      rec.sup_p.push_back(sup);
      rec.dissipation.push_back(diss);
      if (v2 < lambda1 * h2 * (1.0 - 1e-12)) ++rec.poincare_violations;
    };
    record(u);
    const bool ok = integrate_path(
        stepper, config, events, u, scratch,
        [&](const Substep& st, const ShellState& s) {
          const double h2 = norm_sq(s);
          diss += model.kappa() * st.h * model.v_norm_sq(s) * (p == 2 ? 1.0 : h2);
        },
        [&](const Substep&, const ShellState& s, std::size_t regular) {
          sup = std::max(sup, std::pow(norm_sq(s), half_p));
          if (regular != 0 && next < steps.size() && regular == steps[next]) {
            record(s);
            ++next;
          }
        });
    rec.failed = !ok;
  });

  EnsembleSummary out;
  out.p = p;
  for (const auto& rec : paths) {
    if (rec.failed) ++out.failures;
    else ++out.sample_count;
    out.poincare_violations += rec.poincare_violations;
  }
  out.unreliable = static_cast<double>(out.failures) > 0.01 * static_cast<double>(options.ensemble);

  const double xi_p = std::pow(norm_sq(xi), half_p);
  std::vector<double> abs_col, vnorm_col;
  for (std::size_t r = 0; r <= steps.size(); ++r) {
    SummaryRow row;
    row.t = r == 0 ? 0.0 : regular_time(config, steps[r - 1]);
    RunningStats a2, a4, v2, sp, ds;
    abs_col.clear();
    vnorm_col.clear();
    for (const auto& rec : paths) {
      if (rec.failed) continue;
      const double h2 = rec.abs2[r];
      a2.add(h2);
      a4.add(h2 * h2);
      v2.add(rec.vnorm2[r]);
      sp.add(rec.sup_p[r]);
      ds.add(rec.dissipation[r]);
      abs_col.push_back(std::sqrt(h2));
      vnorm_col.push_back(std::sqrt(rec.vnorm2[r]));
    }
    if (!abs_col.empty()) {
      std::sort(abs_col.begin(), abs_col.end());
      std::sort(vnorm_col.begin(), vnorm_col.end());
      for (std::size_t q = 0; q < kSummaryLevels.size(); ++q) {
        row.abs_quantiles[q] = quantile(abs_col, kSummaryLevels[q]);
        row.vnorm_quantiles[q] = quantile(vnorm_col, kSummaryLevels[q]);
      }
    }
    row.abs2 = estimate_of(a2);
    row.abs4 = estimate_of(a4);
    row.vnorm2 = estimate_of(v2);
    row.sup_p = estimate_of(sp);
    row.dissipation = estimate_of(ds);
    for (double v : {row.abs2.mean, row.abs4.mean, row.vnorm2.mean, row.sup_p.mean, row.dissipation.mean})
      if (!std::isfinite(v)) out.finite = false;
    if (row.t > 0)
      out.envelope_constant =
          std::max(out.envelope_constant, (row.sup_p.mean + row.dissipation.mean - xi_p) / row.t);
    out.rows.push_back(row);
  }
  return out;
}

DecayReport decay_probe(const ShellModel& model, const LevyMeasureSpec& spec, const SdePathConfig& config,
                        const ShellState& xi, const EnsembleOptions& options) {
  if (!spec.symmetric()) throw Error(ErrorKind::Domain, "decay_probe: the Levy measure must be symmetric");
  const double lambda1 = model.eigenvalue(0);
  DecayReport r;
  r.xi_norm_sq = norm_sq(xi);
  r.horizon = lambda1 * lambda1 * std::log(2.0) / model.kappa();
  r.reference_rate = model.kappa() / (lambda1 * lambda1);

  SdePathConfig c = config;
  c.T = r.horizon;
  const EnsembleSummary s = moment_diagnostics(model, spec, c, xi, 2, options);
  r.failures = s.failures;
  const double plateau = ou_second_moment(model, spec, std::numeric_limits<double>::infinity());
  std::vector<double> ft, fy;
  for (const auto& row : s.rows) {
    r.times.push_back(row.t);
    r.energy.push_back(row.abs2);
    if (row.abs2.mean > 2.0 * plateau && row.abs2.mean > 0) {
      ft.push_back(row.t);
      fy.push_back(-std::log(row.abs2.mean));
    }
  }
  if (ft.size() >= 2) r.fitted_rate = least_squares(ft, fy).slope;
  r.energy_at_horizon = s.rows.back().abs2;
  r.decayed = r.energy_at_horizon.mean + 3.0 * r.energy_at_horizon.se < 0.5 * r.xi_norm_sq;
  return r;
}

namespace {

ProbabilityEstimate probability(std::size_t successes, std::size_t trials) {
  ProbabilityEstimate p;
  p.successes = successes;
  p.trials = trials;
  p.p_hat = trials > 0 ? static_cast<double>(successes) / static_cast<double>(trials) : 0.0;
  p.wilson = wilson_interval(successes, trials);
  p.excludes_zero = p.wilson.lower > 0.0;
  return p;
}

}  // namespace

SmallDeviationProbe small_deviation_probe(const LevyMeasureSpec& spec, double T, double epsilon, std::size_t samples,
                                          double delta_cut, std::uint64_t seed, unsigned workers) {
  if (samples < 10000) throw Error(ErrorKind::Domain, "small_deviation_probe: need at least 1e4 samples");
  if (!(T > 0) || !(epsilon > 0)) throw Error(ErrorKind::Domain, "small_deviation_probe: T and epsilon must be > 0");
  const JumpSampler sampler(spec, delta_cut);
  const double drift = sampler.small_jump_drift();
  std::vector<unsigned char> small(samples, 0);
  parallel_for(samples, workers, [&](std::size_t i) {
    RngStream rng(seed, derive_stream_id(stream_purpose::small_deviation, i));
    const JumpPath path = sampler.sample(T, 1, rng);
    // l is linear between jumps, so its sup is attained at a jump (either side) or at T.
    double level = 0.0, last = 0.0, sup = 0.0;
    for (const auto& e : path.events[0]) {
      level += drift * (e.time - last);
      sup = std::max(sup, std::fabs(level));
      level += e.size;
      sup = std::max(sup, std::fabs(level));
      last = e.time;
      if (sup >= epsilon) break;
    }
    level += drift * (T - last);
    sup = std::max(sup, std::fabs(level));
    small[i] = sup < epsilon ? 1 : 0;
  });
  const auto hits = static_cast<std::size_t>(std::count(small.begin(), small.end(), 1));
  return {probability(hits, samples), small_deviation_verdict(spec)};
}

std::vector<ShellState> accessibility_probe_set(int shells, double radius, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(shells);
  std::vector<ShellState> set;
  set.emplace_back(n, std::complex<double>{0.0, 0.0});
  for (const auto& z : {std::complex<double>{radius, 0.0}, std::complex<double>{-radius, 0.0},
                        std::complex<double>{0.0, radius}}) {
    ShellState u(n, {0.0, 0.0});
    u[0] = z;
    set.push_back(u);
  }
  ShellState last(n, {0.0, 0.0});
  last[n - 1] = {radius, 0.0};
  set.push_back(last);
  RngStream rng(seed, derive_stream_id(stream_purpose::accessibility, 0xffffffffULL));
  ShellState r = random_state(shells, rng);
  const double nr = std::sqrt(norm_sq(r));
  for (auto& z : r) z *= radius / nr;
  set.push_back(r);
  return set;
}

AccessibilityReport accessibility_probe(const ShellModel& model, const LevyMeasureSpec& spec,
                                        const SdePathConfig& config, const std::vector<ShellState>& xi_set,
                                        const AccessibilityOptions& options) {
  config.validate();
  if (xi_set.empty()) throw Error(ErrorKind::Domain, "accessibility_probe: empty initial-state set");
  for (const auto& xi : xi_set) {
    if (static_cast<int>(xi.size()) != model.shells())
      throw Error(ErrorKind::Shape, "accessibility_probe: xi length differs from model.n");
    if (std::sqrt(norm_sq(xi)) > options.radius * (1.0 + 1e-12))
      throw Error(ErrorKind::Domain, "accessibility_probe: initial state outside the probe radius");
  }
  if (!(options.gamma > 0) || !(options.radius > 0))
    throw Error(ErrorKind::Domain, "accessibility_probe: gamma and radius must be > 0");

  AccessibilityReport r;
  r.gamma = options.gamma;
  r.noise_floor = ou_second_moment(model, spec, std::numeric_limits<double>::infinity());
  if (!(options.gamma > r.noise_floor)) {
    std::ostringstream os;
    os << "accessibility_probe: gamma=" << options.gamma << " does not exceed the noise floor " << r.noise_floor;
    throw Error(ErrorKind::Domain, os.str());
  }
  if (options.C0 > 0) {
    r.C0 = options.C0;
  } else {
    RngStream rng(config.seed, derive_stream_id(stream_purpose::constants, 0));
    r.C0 = estimate_bilinear_constants(model.params(), options.constant_samples, rng).C0;
  }
  const double kappa = model.kappa();
  const double lambda1 = model.eigenvalue(0);
  const double c0sq = r.C0 * r.C0;
  // sup|S|^2 < m keeps |v(T0)|^2 <= gamma/4 and |S(T0)|^2 <= gamma/4.
  const double m = std::min({options.gamma / 4.0, kappa * kappa / (4.0 * lambda1 * c0sq),
                             std::sqrt(options.gamma * kappa / (16.0 * c0sq))});
  r.delta0 = std::sqrt(m);
  r.epsilon = std::min(r.delta0, kappa * kappa / (4.0 * lambda1 * c0sq));
  r.T0 = std::max(0.0, 2.0 * lambda1 / kappa * std::log(8.0 * options.radius * options.radius / options.gamma));

  SdePathConfig c = config;
  c.T = r.T0;
  if (c.dt > c.T) c.dt = c.T;
  const int n = model.shells();
  const int d = real_dimension(n);
  const JumpSampler sampler(spec, c.delta_cut);
  const double drift = sampler.small_jump_drift();
  const Stepper stepper(model, c.scheme, c.R, drift);
  const double eps2 = r.epsilon * r.epsilon;

  struct Outcome {
    bool small = false, success = false, failed = false;
    double worst = 0.0;
  };
  std::vector<Outcome> outcomes(options.samples);
  parallel_for(options.samples, options.workers, [&](std::size_t idx) {
    Outcome& o = outcomes[idx];
    RngStream rng(c.seed, derive_stream_id(stream_purpose::accessibility, idx));
    std::vector<NoiseEvent> events;
    sampler.sample_merged(c.T, d, rng, events);

    ShellState S(static_cast<std::size_t>(n), {0.0, 0.0});
    bool small = true;
    for_each_substep(c.T, c.dt, events, [&](const Substep& st) {
      if (!small) return;
      for (int i = 0; i < n; ++i) {
        const double rate = kappa * model.eigenvalue(i);
        const double decay = std::exp(-rate * st.h);
        const double w = drift * model.beta(i) * (-std::expm1(-rate * st.h)) / rate;
        auto& s = S[static_cast<std::size_t>(i)];
        s = {decay * s.real() + w, decay * s.imag() + w};
      }
      if (st.event) coordinate(S, st.event->component) += model.beta(st.event->component / 2) * st.event->size;
      if (norm_sq(S) >= eps2) small = false;
    });
    o.small = small;
    if (!small) return;
    o.success = true;
    ShellState u, scratch;
    for (const auto& xi : xi_set) {
      u = xi;
      const bool ok = integrate_path(
          stepper, c, events, u, scratch, [](const Substep&, const ShellState&) {},
          [](const Substep&, const ShellState&, std::size_t) {});
      if (!ok) {
        o.failed = true;
        o.success = false;
        break;
      }
      const double e = norm_sq(u);
      o.worst = std::max(o.worst, e);
      if (e > options.gamma) o.success = false;
    }
  });

  std::size_t small_count = 0;
  for (const auto& o : outcomes) {
    if (o.small) ++small_count;
    if (o.success) ++r.successes;
    if (o.failed) ++r.failures;
    if (o.small) r.worst_final_energy = std::max(r.worst_final_energy, o.worst);
  }
  r.convolution_small = probability(small_count, options.samples);
  if (small_count == 0) {
    std::ostringstream os;
    os << "accessibility_probe: no path kept sup|S| below epsilon=" << r.epsilon << " over T0=" << r.T0
       << "; enlarge the sample count or lower the noise intensity";
    throw Error(ErrorKind::Infeasible, os.str());
  }
  r.conditional_success_rate = static_cast<double>(r.successes) / static_cast<double>(small_count);
  r.conditional_wilson = wilson_interval(r.successes, small_count);
  r.lower_bound = r.convolution_small.p_hat * r.conditional_success_rate;
  return r;
}

double ConvergenceReport::min_p_value_at(double t) const {
  if (series.empty()) return std::numeric_limits<double>::quiet_NaN();
  double best = series.front().t;
  for (const auto& s : series)
    if (std::fabs(s.t - t) < std::fabs(best - t)) best = s.t;
  double p = 1.0;
  for (const auto& s : series)
    if (s.t == best) p = std::min(p, s.p_value);
  return p;
}

ConvergenceReport invariant_measure_convergence(const ShellModel& model, const LevyMeasureSpec& spec,
                                                const SdePathConfig& config, const ShellState& xi_a,
                                                const ShellState& xi_b, const ConvergenceOptions& options) {
  config.validate();
  if (options.ensemble < 1000) throw Error(ErrorKind::Domain, "invariant_measure_convergence: ensemble must be >= 1000");
  if (options.points < 1) throw Error(ErrorKind::Domain, "invariant_measure_convergence: need at least one KS time");
  if (static_cast<int>(xi_a.size()) != model.shells() || static_cast<int>(xi_b.size()) != model.shells())
    throw Error(ErrorKind::Shape, "invariant_measure_convergence: initial state length differs from model.n");

  const double rate = model.kappa() * model.eigenvalue(0);
  ConvergenceReport r;
  r.burn_in = options.burn_in < 0 ? 5.0 / rate : options.burn_in;
  r.horizon = options.horizon < 0 ? 20.0 / rate : options.horizon;
  if (!(r.horizon >= r.burn_in) || !(r.burn_in > 0))
    throw Error(ErrorKind::Domain, "invariant_measure_convergence: need 0 < burn_in <= horizon");

  SdePathConfig c = config;
  c.T = r.horizon;
  // KS times snapped onto the regular grid.
  std::vector<std::size_t> steps;
  for (int k = 0; k < options.points; ++k) {
    const double t = options.points == 1 ? r.burn_in
                                         : r.burn_in + (r.horizon - r.burn_in) * k / (options.points - 1);
    const auto s = std::max<std::size_t>(1, std::min(c.regular_steps(), static_cast<std::size_t>(std::llround(t / c.dt))));
    if (steps.empty() || s > steps.back()) steps.push_back(s);
  }

  const int n = model.shells();
  const int d = real_dimension(n);
  const JumpSampler sampler(spec, c.delta_cut);
  const Stepper stepper(model, c.scheme, c.R, sampler.small_jump_drift());
  const double lambda1 = model.eigenvalue(0);

  struct Obs {
    bool failed = false;
    std::vector<std::array<double, 3>> values;
    std::size_t poincare = 0;
  };
  const auto run = [&](const ShellState& xi, std::uint32_t purpose, std::vector<Obs>& out) {
    out.assign(options.ensemble, Obs{});
    parallel_for(options.ensemble, options.workers, [&](std::size_t idx) {
      Obs& o = out[idx];
      RngStream rng(c.seed, derive_stream_id(purpose, options.replicate * options.ensemble + idx));
      std::vector<NoiseEvent> events;
      sampler.sample_merged(c.T, d, rng, events);
      ShellState u = xi, scratch;
      std::size_t next = 0;
      const bool ok = integrate_path(
          stepper, c, events, u, scratch, [](const Substep&, const ShellState&) {},
          [&](const Substep&, const ShellState& s, std::size_t regular) {
            if (regular == 0 || next >= steps.size() || regular != steps[next]) return;
            const double h2 = norm_sq(s), v2 = model.v_norm_sq(s);
            if (v2 < lambda1 * h2 * (1.0 - 1e-12)) ++o.poincare;
            o.values.push_back({std::sqrt(h2), s[0].real(), std::sqrt(v2)});
            ++next;
          });
      o.failed = !ok;
    });
  };
  std::vector<Obs> a, b;
  run(xi_a, stream_purpose::ergodicity_a, a);
  run(xi_b, stream_purpose::ergodicity_b, b);

  for (const auto& o : a) {
    r.failures_a += o.failed ? 1 : 0;
    r.poincare_violations += o.poincare;
  }
  for (const auto& o : b) {
    r.failures_b += o.failed ? 1 : 0;
    r.poincare_violations += o.poincare;
  }
  const double limit = 0.01 * static_cast<double>(options.ensemble);
  r.unreliable = static_cast<double>(r.failures_a) > limit || static_cast<double>(r.failures_b) > limit;

  static const char* kNames[3] = {"abs", "re_u1", "vnorm"};
  std::array<std::vector<double>, 3> fit_t, fit_y;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const double t = std::min(static_cast<double>(steps[k]) * c.dt, c.T);
    for (int q = 0; q < 3; ++q) {
      std::vector<double> xa, xb;
      for (const auto& o : a)
        if (!o.failed) xa.push_back(o.values[k][static_cast<std::size_t>(q)]);
      for (const auto& o : b)
        if (!o.failed) xb.push_back(o.values[k][static_cast<std::size_t>(q)]);
      const KsResult ks = ks_two_sample(std::move(xa), std::move(xb));
      r.series.push_back({t, kNames[q], ks.statistic, ks.p_value});
      if (ks.statistic > 0) {
        fit_t[static_cast<std::size_t>(q)].push_back(t);
        fit_y[static_cast<std::size_t>(q)].push_back(std::log(ks.statistic));
      }
    }
  }
  for (std::size_t q = 0; q < 3; ++q)
    if (fit_t[q].size() >= 2) r.decay_slope[q] = least_squares(fit_t[q], fit_y[q]).slope;
  return r;
}

}  // namespace levyshell
