#include "experiments.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "levyshell/bel.hpp"
#include "levyshell/ergolab.hpp"
#include "levyshell/errors.hpp"
#include "levyshell/integrator.hpp"
#include "levyshell/levy.hpp"
#include "levyshell/rng.hpp"

namespace levyshell::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

// Binary mode so that line endings stay LF everywhere.
class OutputFile {
public:
  OutputFile(const fs::path& dir, const std::string& name) : path_(dir / name), os_(path_, std::ios::binary) {
    if (!os_) throw Error(ErrorKind::Resource, "cannot write '" + path_.string() + "'");
  }
  std::ostream& stream() { return os_; }
  void close() {
    os_.close();
    if (!os_) throw Error(ErrorKind::Resource, "failed writing '" + path_.string() + "'");
  }

private:
  fs::path path_;
  std::ofstream os_;
};

class CsvWriter {
public:
  CsvWriter(const fs::path& dir, const std::string& name, const std::vector<std::string>& header)
      : file_(dir, name) {
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    auto& os = file_.stream();
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  }
  void close() { file_.close(); }

private:
  OutputFile file_;
};

std::string num(double v) { return csv_number(v); }

std::string num(std::size_t v) { return std::to_string(v); }
std::string num(int v) { return std::to_string(v); }

struct Context {
  const RunConfig& config;
  ShellModel model;
  LevyMeasureSpec spec;
  SdePathConfig integrator;
  fs::path dir;
  std::ostringstream summary;
};

TestFunctionSpec phi_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "CosineOfCoordinate") return TestFunctionSpec::cosine_of_coordinate(j.at("k").get<int>(), j.at("frequency").get<double>());
  if (kind == "BumpOfNormSq")
    return TestFunctionSpec::bump_of_norm_sq(j.at("center").get<std::vector<double>>(), j.at("scale").get<double>());
  return TestFunctionSpec::logistic_of_linear(j.at("weights").get<std::vector<double>>());
}

void write_state_rows(CsvWriter& csv, const std::vector<double>& times, const std::vector<ShellState>& states,
                      std::size_t first) {
  for (std::size_t i = first; i < states.size(); ++i)
    for (std::size_t j = 0; j < states[i].size(); ++j)
      csv.row({num(times[i]), num(static_cast<int>(j) + 1), num(states[i][j].real()), num(states[i][j].imag())});
}

void write_moment_rows(CsvWriter& csv, const EnsembleSummary& s, const std::string& replicate) {
  for (const auto& r : s.rows) {
    const std::string t = num(r.t);
    csv.row({t, "E_abs2", num(r.abs2.mean), num(r.abs2.se), replicate});
    csv.row({t, "E_abs4", num(r.abs4.mean), num(r.abs4.se), replicate});
    csv.row({t, "E_vnorm2", num(r.vnorm2.mean), num(r.vnorm2.se), replicate});
    csv.row({t, "E_sup_abs_p", num(r.sup_p.mean), num(r.sup_p.se), replicate});
    csv.row({t, "dissipation", num(r.dissipation.mean), num(r.dissipation.se), replicate});
    for (std::size_t q = 0; q < kSummaryLevels.size(); ++q) {
      char name[32];
      std::snprintf(name, sizeof name, "q%02d", static_cast<int>(std::lround(kSummaryLevels[q] * 100)));
      csv.row({t, std::string(name) + "_abs", num(r.abs_quantiles[q]), "", replicate});
      csv.row({t, std::string(name) + "_vnorm", num(r.vnorm_quantiles[q]), "", replicate});
    }
  }
}

void summarize_moments(std::ostream& os, const EnsembleSummary& s) {
  os << "moments (p=" << s.p << "): samples " << s.sample_count << ", failures " << s.failures
     << (s.unreliable ? " (unreliable)" : "") << ", envelope constant " << num(s.envelope_constant)
     << ", Poincare violations " << s.poincare_violations << '\n';
}

bool run_simulate(Context& c) {
  const json& e = c.config.experiment;
  const ShellState xi = state_from_json(e["xi"], c.model.shells());
  const auto path = e["path_index"].get<std::uint64_t>();
  const JumpPath noise =
      sample_noise(c.config.model, c.spec, c.integrator, derive_stream_id(stream_purpose::trajectory, path));
  SimulateOptions opts;
  opts.with_convolution = e["with_convolution"].get<bool>();
  const Trajectory tr = simulate(c.model, c.integrator, xi, noise, opts);

  CsvWriter csv(c.dir, "trajectory.csv", {"t", "shell", "u_re", "u_im"});
  write_state_rows(csv, tr.times, tr.states, 1);
  csv.close();
  if (tr.convolution) {
    CsvWriter conv(c.dir, "convolution.csv", {"t", "shell", "s_re", "s_im"});
    write_state_rows(conv, tr.times, *tr.convolution, 1);
    conv.close();
  }

  double peak = 0.0;
  for (const auto& u : tr.states) peak = std::max(peak, norm_sq(u));
  auto& os = c.summary;
  os << "simulate: n=" << c.model.shells() << " T=" << num(c.integrator.T) << " dt=" << num(c.integrator.dt)
     << " regular steps " << c.integrator.regular_steps() << ", jumps " << noise.event_count() << '\n';
  os << "rows per shell " << tr.states.size() - 1 << ", final |u|^2 " << num(norm_sq(tr.states.back()))
     << ", peak |u|^2 " << num(peak) << '\n';

  bool reliable = true;
  if (const auto m = e["ensemble"].get<std::size_t>(); m > 0) {
    EnsembleOptions eo;
    eo.ensemble = m;
    eo.records = e["records"].get<int>();
    eo.workers = c.config.workers;
    const EnsembleSummary s = moment_diagnostics(c.model, c.spec, c.integrator, xi, e["p"].get<int>(), eo);
    CsvWriter mcsv(c.dir, "moments.csv", {"t", "statistic", "value", "se", "replicate"});
    write_moment_rows(mcsv, s, "");
    mcsv.close();
    summarize_moments(os, s);
    reliable = !s.unreliable;
  }
  return reliable;
}

bool run_bel_check(Context& c) {
  const json& e = c.config.experiment;
  const ShellState x = state_from_json(e["x"], c.model.shells());
  SdePathConfig cfg = c.integrator;
  cfg.T = e["t"].get<double>();
  BelCheckOptions opts;
  for (const auto& p : e["phis"]) opts.phis.push_back(phi_from_json(p));
  opts.M = e["M"].get<std::size_t>();
  opts.fd_step = e["fd_step"].get<double>();
  opts.delta = e["delta"].get<double>();
  opts.workers = c.config.workers;
  const BelCheckResult res = bel_check(c.model, c.spec, cfg, x, opts);

  OutputFile jsonl(c.dir, "bel.jsonl");
  auto& os = c.summary;
  os << "bel-check: n=" << c.model.shells() << " t=" << num(cfg.T) << " M=" << opts.M << " delta_cut="
     << num(cfg.delta_cut) << " R=" << (cfg.R ? num(*cfg.R) : std::string("none")) << '\n';
  const bool have_fd = opts.fd_step > 0;
  for (std::size_t p = 0; p < res.estimates.size(); ++p) {
    const BelEstimate& est = res.estimates[p];
    const GradientBoundReport bound =
        gradient_bound_check(c.model, c.spec, cfg, est, opts.phis[p], res.flow, cfg.T);
    std::size_t agree = 0;
    for (std::size_t k = 0; k < est.bel.size(); ++k) {
      json rec;
      rec["phi"] = est.phi;
      rec["coord"] = k;
      rec["bel_mean"] = est.bel[k].mean;
      rec["bel_se"] = est.bel[k].se;
      if (have_fd) {
        rec["fd_mean"] = est.fd[k].mean;
        rec["fd_se"] = est.fd[k].se;
        const double se = std::hypot(est.bel[k].se, est.fd[k].se);
        const bool ok = std::abs(est.bel[k].mean - est.fd[k].mean) <= 3.0 * se;
        rec["within_3se"] = ok;
        agree += ok;
      } else {
        rec["fd_mean"] = nullptr;
        rec["fd_se"] = nullptr;
      }
      rec["lemma_mean"] = est.lemma[k].mean;
      rec["lemma_se"] = est.lemma[k].se;
      rec["pathwise_mean"] = est.pathwise[k].mean;
      rec["pathwise_se"] = est.pathwise[k].se;
      rec["rejected_fraction"] = est.rejected_fraction;
      rec["bound_lhs"] = bound.lhs;
      rec["bound_rhs"] = bound.rhs;
      rec["bound_holds"] = bound.holds;
      rec["bound_inconclusive"] = bound.inconclusive;
      jsonl.stream() << rec.dump() << '\n';
    }
    os << est.phi << ": rejected " << est.rejected << "/" << est.samples;
    if (have_fd) os << ", BEL within 3 SE of FD on " << agree << "/" << est.bel.size() << " coordinates";
    os << "; bound |grad| " << num(bound.lhs) << " <= " << num(bound.rhs) << " "
       << (bound.inconclusive ? "inconclusive" : bound.holds ? "holds" : "violated");
    if (!bound.note.empty()) os << " (" << bound.note << ")";
    os << '\n';
  }
  jsonl.close();
  return true;
}

bool run_ergodicity(Context& c) {
  const json& e = c.config.experiment;
  const int n = c.model.shells();
  const ShellState xi_a = state_from_json(e["xi_a"], n);
  const ShellState xi_b = state_from_json(e["xi_b"], n);
  auto& os = c.summary;
  bool reliable = true;
  CsvWriter csv(c.dir, "ergodicity.csv", {"t", "statistic", "value", "se", "replicate"});

  ConvergenceOptions co;
  co.ensemble = e["ensemble"].get<std::size_t>();
  co.burn_in = e["burn_in"].get<double>();
  co.horizon = e["horizon"].get<double>();
  co.points = e["points"].get<int>();
  co.workers = c.config.workers;
  const auto replicates = e["replicates"].get<std::size_t>();
  std::size_t passed = 0;
  os << "ergodicity: n=" << n << ", ensembles of " << co.ensemble << " from |xi_a|=" << num(std::sqrt(norm_sq(xi_a)))
     << " and |xi_b|=" << num(std::sqrt(norm_sq(xi_b))) << ", KS from t=" << num(co.burn_in) << " to "
     << num(co.horizon) << '\n';
  for (std::size_t r = 0; r < replicates; ++r) {
    co.replicate = r;
    const ConvergenceReport rep = invariant_measure_convergence(c.model, c.spec, c.integrator, xi_a, xi_b, co);
    const std::string rs = num(r);
    for (const auto& pt : rep.series) {
      csv.row({num(pt.t), "ks_" + pt.observable, num(pt.statistic), "", rs});
      csv.row({num(pt.t), "ks_p_" + pt.observable, num(pt.p_value), "", rs});
    }
    const double pmin = rep.min_p_value_at(rep.burn_in);
    passed += pmin > 0.01;
    os << "replicate " << r << ": min KS p-value at burn-in " << num(pmin) << ", failures " << rep.failures_a << "+"
       << rep.failures_b << (rep.unreliable ? " (unreliable)" : "") << '\n';
    reliable = reliable && !rep.unreliable;
  }
  os << "replicates with every KS p-value > 0.01 at burn-in: " << passed << "/" << replicates << '\n';

  if (e["moments"].get<bool>()) {
    EnsembleOptions eo;
    eo.ensemble = co.ensemble;
    eo.records = e["records"].get<int>();
    eo.workers = c.config.workers;
    const EnsembleSummary s = moment_diagnostics(c.model, c.spec, c.integrator, xi_a, e["p"].get<int>(), eo);
    write_moment_rows(csv, s, "");
    summarize_moments(os, s);
    reliable = reliable && !s.unreliable;
  }

  if (e["decay"].get<bool>()) {
    if (!c.spec.symmetric()) {
      os << "decay probe skipped: the Levy measure is not symmetric\n";
    } else {
      ShellState xi(static_cast<std::size_t>(n));
      xi[0] = std::sqrt(e["decay_xi_norm_sq"].get<double>());
      EnsembleOptions eo;
      eo.ensemble = co.ensemble;
      eo.workers = c.config.workers;
      const DecayReport d = decay_probe(c.model, c.spec, c.integrator, xi, eo);
      for (std::size_t i = 0; i < d.times.size(); ++i)
        csv.row({num(d.times[i]), "decay_E_abs2", num(d.energy[i].mean), num(d.energy[i].se), ""});
      os << "decay from |xi|^2=" << num(d.xi_norm_sq) << ": E|u|^2 at horizon " << num(d.horizon) << " is "
         << num(d.energy_at_horizon.mean) << " +- " << num(d.energy_at_horizon.se) << " ("
         << (d.decayed ? "below" : "not below") << " |xi|^2/2), fitted rate " << num(d.fitted_rate) << " vs kappa/lambda_1^2 "
         << num(d.reference_rate) << '\n';
    }
  }

  if (e["accessibility"].get<bool>()) {
    AccessibilityOptions ao;
    ao.samples = e["accessibility_samples"].get<std::size_t>();
    ao.radius = e["radius"].get<double>();
    ao.gamma = e["gamma"].get<double>();
    ao.C0 = e["C0"].get<double>();
    ao.workers = c.config.workers;
    const auto set = accessibility_probe_set(n, ao.radius, c.config.seed);
    const AccessibilityReport a = accessibility_probe(c.model, c.spec, c.integrator, set, ao);
    os << "accessibility: T0 " << num(a.T0) << ", delta0 " << num(a.delta0) << ", C0 " << num(a.C0) << ", epsilon "
       << num(a.epsilon) << ", noise floor " << num(a.noise_floor) << '\n';
    os << "  P(sup|S| < epsilon) " << num(a.convolution_small.p_hat) << " in [" << num(a.convolution_small.wilson.lower)
       << ", " << num(a.convolution_small.wilson.upper) << "], conditional success " << a.successes << "/"
       << a.convolution_small.successes << " = " << num(a.conditional_success_rate) << ", lower bound "
       << num(a.lower_bound) << '\n';
  }
  csv.close();
  return reliable;
}

bool run_noise_check(Context& c, std::ostream& out) {
  const json& e = c.config.experiment;
  const SmallDeviationVerdict v = small_deviation_verdict(c.spec);
  const auto grid = e["epsilon_grid"].get<std::vector<double>>();
  const OrderConditionEstimate oc = order_condition_estimate(c.spec, e["y"].get<double>(), grid);
  const SmallDeviationProbe probe =
      small_deviation_probe(c.spec, e["T"].get<double>(), e["epsilon"].get<double>(), e["samples"].get<std::size_t>(),
                            c.config.noise.delta_cut, c.config.seed, c.config.workers);

  std::ostringstream table;
  table << "statistic,argument,value\n";
  for (double q : e["moments_q"].get<std::vector<double>>()) table << "moment," << num(q) << ',' << num(moment(c.spec, q)) << '\n';
  for (double lo : {c.config.noise.delta_cut, 0.1, 1.0, 10.0})
    table << "tail_mass," << num(lo) << ',' << num(tail_mass(c.spec, lo)) << '\n';
  table << "compensator_integral,," << num(compensator_integral(c.spec)) << '\n';
  table << "type_one_integral,," << num(v.type_one_integral) << '\n';
  table << "small_jump_drift,," << num(v.drift) << '\n';
  for (std::size_t i = 0; i < grid.size(); ++i) table << "order_F," << num(grid[i]) << ',' << num(oc.F[i]) << '\n';
  table << "small_deviation_p_hat," << num(e["epsilon"].get<double>()) << ',' << num(probe.probability.p_hat) << '\n';
  table << "small_deviation_wilson_lower," << num(e["epsilon"].get<double>()) << ',' << num(probe.probability.wilson.lower) << '\n';
  table << "small_deviation_wilson_upper," << num(e["epsilon"].get<double>()) << ',' << num(probe.probability.wilson.upper) << '\n';
  OutputFile f(c.dir, "noise.csv");
  f.stream() << table.str();
  f.close();

  auto& os = c.summary;
  os << "small-deviation verdict: " << to_string(v.verdict) << " (" << v.explanation << ")\n";
  os << "order condition: " << to_string(oc.verdict) << ", fitted exponent " << num(oc.alpha_hat) << ", liminf proxy "
     << num(oc.liminf_proxy);
  if (!oc.note.empty()) os << " (" << oc.note << ")";
  os << '\n';
  os << "P(sup|l| < " << num(e["epsilon"].get<double>()) << " on [0," << num(e["T"].get<double>()) << "]) = "
     << num(probe.probability.p_hat) << " in [" << num(probe.probability.wilson.lower) << ", "
     << num(probe.probability.wilson.upper) << "]" << (probe.probability.excludes_zero ? ", excludes 0" : "") << '\n';
  out << table.str();
  return true;
}

bool run_refine(Context& c) {
  const json& e = c.config.experiment;
  const auto coarse = e["n_coarse"].get<std::vector<int>>();
  const int fine = e["n_fine"].get<int>();
  const ShellState xi = state_from_json(e["xi"], fine);
  const auto path = e["path_index"].get<std::uint64_t>();
  const RefinementReport rep = galerkin_refinement(c.config.model, c.spec, c.integrator, coarse, fine, xi,
                                                   derive_stream_id(stream_purpose::refinement, path));
  CsvWriter csv(c.dir, "refine.csv", {"n_coarse", "n_fine", "l2_error"});
  for (std::size_t i = 0; i < rep.n_coarse.size(); ++i)
    csv.row({num(rep.n_coarse[i]), num(rep.n_fine), num(rep.l2_error[i])});
  csv.close();
  c.summary << "refine: n_fine=" << fine << ", errors " << (rep.monotone ? "decrease" : "do not decrease")
            << " monotonically with n_coarse\n";
  return true;
}

}  // namespace

void run_experiment(const RunConfig& config, std::ostream& out) {
  SdePathConfig integrator = config.integrator;
  integrator.seed = config.seed;
  integrator.delta_cut = config.noise.delta_cut;
  Context c{config, config.build_model(), config.noise.spec(), integrator, fs::path(config.output_dir), {}};

  std::error_code ec;
  fs::create_directories(c.dir, ec);
  if (ec) throw Error(ErrorKind::Resource, "cannot create output_dir '" + config.output_dir + "': " + ec.message());
  {
    OutputFile m(c.dir, "manifest.json");
    m.stream() << manifest(config).dump(2) << '\n';
    m.close();
  }

  bool reliable = true;
  switch (config.command) {
    case Command::Simulate: reliable = run_simulate(c); break;
    case Command::BelCheck: reliable = run_bel_check(c); break;
    case Command::Ergodicity: reliable = run_ergodicity(c); break;
    case Command::NoiseCheck: reliable = run_noise_check(c, out); break;
    case Command::Refine: reliable = run_refine(c); break;
  }

  OutputFile s(c.dir, "summary.txt");
  s.stream() << c.summary.str();
  s.close();
  out << c.summary.str();
  if (!reliable)
    throw Error(ErrorKind::Undetermined, "more than 1% of the paths failed; statistics were written but are unreliable");
}

}  // namespace levyshell::cli
