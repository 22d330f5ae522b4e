#include "levyshell/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "levyshell/errors.hpp"

namespace levyshell {

const char* to_string(Scheme s) {
  return s == Scheme::SemiImplicitEuler ? "SemiImplicitEuler" : "ExponentialEuler";
}

std::vector<std::string> SdePathConfig::violations() const {
  std::vector<std::string> out;
  if (!std::isfinite(T) || T < 0) out.push_back("integrator.T must be a finite real >= 0");
  if (!std::isfinite(dt) || !(dt > 0)) out.push_back("integrator.dt must be > 0");
  else if (T > 0 && dt > T) out.push_back("integrator.dt must not exceed integrator.T");
  if (!std::isfinite(delta_cut) || !(delta_cut > 0)) out.push_back("noise.delta_cut must be > 0");
  if (R && (!std::isfinite(*R) || !(*R > 0))) out.push_back("integrator.R must be > 0 when given");
  return out;
}

void SdePathConfig::validate() const {
  const auto bad = violations();
  if (bad.empty()) return;
  std::ostringstream os;
  for (std::size_t i = 0; i < bad.size(); ++i) os << (i ? "; " : "") << bad[i];
  throw Error(ErrorKind::Parameter, os.str());
}

std::size_t SdePathConfig::regular_steps() const {
  if (T <= 0) return 0;
  return static_cast<std::size_t>(std::ceil(T / dt * (1.0 - 1e-12)));
}

std::vector<Substep> build_substeps(double T, double dt, std::span<const NoiseEvent> events) {
  std::vector<Substep> out;
  out.reserve(static_cast<std::size_t>(T > 0 ? std::ceil(T / dt) : 0) + events.size());
  for_each_substep(T, dt, events, [&](const Substep& s) { out.push_back(s); });
  return out;
}

// ---------------------------------------------------------------------------

Stepper::Stepper(const ShellModel& model, Scheme scheme, std::optional<double> R, double small_jump_drift)
    : model_(model), scheme_(scheme), R_(R), drift_(small_jump_drift) {
  if (R_ && !(*R_ > 0)) throw Error(ErrorKind::Domain, "Stepper: R must be > 0");
}

double Stepper::damp(int shell, double h) const {
  const double x = h * model_.kappa() * model_.eigenvalue(shell);
  return scheme_ == Scheme::SemiImplicitEuler ? 1.0 / (1.0 + x) : std::exp(-x);
}

double Stepper::gain(int shell, double h) const {
  const double r = model_.kappa() * model_.eigenvalue(shell);
  if (scheme_ == Scheme::SemiImplicitEuler) return h / (1.0 + h * r);
  return -std::expm1(-h * r) / r;
}

void Stepper::forcing(const ShellState& u, ShellState& out) const {
  if (R_) {
    truncated_nonlinearity(model_, *R_, u, out);
  } else {
    model_.bilinear(u, u, out);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double w = drift_ * model_.beta(static_cast<int>(i));
    out[i] = std::complex<double>(w - out[i].real(), w - out[i].imag());
  }
}

void Stepper::advance(ShellState& u, double h, ShellState& scratch) const {
  if (h == 0.0) return;
  forcing(u, scratch);
  const int n = model_.shells();
  for (int i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    u[idx] = damp(i, h) * u[idx] + gain(i, h) * scratch[idx];
  }
}

void Stepper::apply_jump(ShellState& u, int component, double z) const {
  coordinate(u, component) += noise_weight(component) * z;
}

ShellState Trajectory::left_limit(const ShellModel& model, std::size_t i) const {
  ShellState u = states[i];
  if (jump_component[i] >= 0) coordinate(u, jump_component[i]) -= model.beta(jump_component[i] / 2) * jump_size[i];
  return u;
}

// ---------------------------------------------------------------------------

JumpPath sample_noise(const ModelParams& params, const LevyMeasureSpec& spec, const SdePathConfig& config,
                      std::uint64_t stream_id) {
  RngStream rng(config.seed, stream_id);
  return JumpSampler(spec, config.delta_cut).sample(config.T, real_dimension(params.n), rng);
}

namespace {

ShellState single_step(const ModelParams& params, const SdePathConfig& config, std::optional<double> R,
                       const ShellState& state, double t0, std::span<const NoiseEvent> events, double drift) {
  const ShellModel model(params);
  if (static_cast<int>(state.size()) != params.n) throw Error(ErrorKind::Shape, "step: state length differs from model.n");
  const Stepper stepper(model, config.scheme, R, drift);
  const double t1 = t0 + config.dt;
  ShellState u = state, scratch;
  double prev = t0;
  for (const auto& e : events) {
    if (!(e.time > t0 && e.time <= t1)) throw Error(ErrorKind::Domain, "step: event outside (t0, t0+dt]");
    if (e.time < prev) throw Error(ErrorKind::Domain, "step: events must be time ordered");
    stepper.advance(u, e.time - prev, scratch);
    stepper.apply_jump(u, e.component, e.size);
    prev = e.time;
  }
  stepper.advance(u, t1 - prev, scratch);
  const double nrm = std::sqrt(norm_sq(u));
  if (!std::isfinite(nrm) || nrm > kBlowUpNorm) throw BlowUpError(t1, nrm);
  return u;
}

}  // namespace

ShellState step_galerkin(const ModelParams& params, const SdePathConfig& config, const ShellState& state, double t0,
                         std::span<const NoiseEvent> events, double drift) {
  return single_step(params, config, std::nullopt, state, t0, events, drift);
}

ShellState step_truncated(const ModelParams& params, const SdePathConfig& config, const ShellState& state, double t0,
                          std::span<const NoiseEvent> events, double drift) {
  if (!config.R) throw Error(ErrorKind::Domain, "step_truncated: config.R is required");
  return single_step(params, config, config.R, state, t0, events, drift);
}

Trajectory simulate(const ShellModel& model, const SdePathConfig& config, const ShellState& xi, const JumpPath& noise,
                    const SimulateOptions& options) {
  config.validate();
  const int n = model.shells();
  if (static_cast<int>(xi.size()) != n) throw Error(ErrorKind::Shape, "simulate: initial state length differs from model.n");
  const int active = options.active_components < 0 ? noise.component_count : options.active_components;
  if (active > real_dimension(n)) throw Error(ErrorKind::Shape, "simulate: more noise components than coordinates");
  const double drift = noise.small_jump_drift.empty() ? 0.0 : noise.small_jump_drift.front();
  const Stepper stepper(model, config.scheme, config.R, drift);

  const auto events = merged_events(noise);
  const auto steps = build_substeps(config.T, config.dt, events);

  Trajectory tr;
  tr.noise = noise;
  tr.times.reserve(steps.size() + 1);
  tr.states.reserve(steps.size() + 1);
  tr.times.push_back(0.0);
  tr.states.push_back(xi);
  tr.jump_component.push_back(-1);
  tr.jump_size.push_back(0.0);

  std::vector<ShellState> conv;
  ShellState S(static_cast<std::size_t>(n), {0.0, 0.0});
  if (options.with_convolution) conv.push_back(S);

  ShellState u = xi, scratch;
  for (const auto& st : steps) {
    stepper.advance(u, st.h, scratch);
    if (options.with_convolution) {
      for (int i = 0; i < n; ++i) {
        const double r = model.kappa() * model.eigenvalue(i);
        const double w = drift * model.beta(i) * (-std::expm1(-r * st.h)) / r;
        const double d = std::exp(-r * st.h);
        auto& s = S[static_cast<std::size_t>(i)];
        s = {d * s.real() + w, d * s.imag() + w};
      }
    }
    int comp = -1;
    double z = 0.0;
    if (st.event && st.event->component < active) {
      comp = st.event->component;
      z = st.event->size;
      stepper.apply_jump(u, comp, z);
      if (options.with_convolution) coordinate(S, comp) += model.beta(comp / 2) * z;
    }
    tr.times.push_back(st.t_end);
    tr.states.push_back(u);
    tr.jump_component.push_back(comp);
    tr.jump_size.push_back(z);
    if (options.with_convolution) conv.push_back(S);

    const double nrm = std::sqrt(norm_sq(u));
    if (!std::isfinite(nrm) || nrm > kBlowUpNorm) {
      if (options.throw_on_blow_up) throw BlowUpError(st.t_end, nrm);
      tr.failed = true;
      tr.failure_time = st.t_end;
      break;
    }
  }
  if (options.with_convolution) tr.convolution = std::move(conv);
  return tr;
}

ConvolutionPath ou_convolution(const ShellModel& model, const SdePathConfig& config, const JumpPath& noise) {
  const int n = model.shells();
  const double drift = noise.small_jump_drift.empty() ? 0.0 : noise.small_jump_drift.front();
  const auto events = merged_events(noise);
  const auto steps = build_substeps(config.T, config.dt, events);
  ConvolutionPath out;
  out.times.reserve(steps.size() + 1);
  out.values.reserve(steps.size() + 1);
  ShellState S(static_cast<std::size_t>(n), {0.0, 0.0});
  out.times.push_back(0.0);
  out.values.push_back(S);
  std::vector<double> rate(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) rate[static_cast<std::size_t>(i)] = model.kappa() * model.eigenvalue(i);
  for (const auto& st : steps) {
    for (int i = 0; i < n; ++i) {
      const double r = rate[static_cast<std::size_t>(i)];
      const double d = std::exp(-r * st.h);
      const double w = drift * model.beta(i) * (-std::expm1(-r * st.h)) / r;
      auto& s = S[static_cast<std::size_t>(i)];
      s = {d * s.real() + w, d * s.imag() + w};
    }
    if (st.event) coordinate(S, st.event->component) += model.beta(st.event->component / 2) * st.event->size;
    out.times.push_back(st.t_end);
    out.values.push_back(S);
  }
  return out;
}

ConvolutionPath ou_convolution(const ModelParams& params, const SdePathConfig& config, const JumpPath& noise) {
  const ShellModel model(params);
  return ou_convolution(model, config, noise);
}

std::vector<ShellState> solve_v(const ShellModel& model, const SdePathConfig& config, const ConvolutionPath& conv,
                                const ShellState& v0) {
  const int n = model.shells();
  if (static_cast<int>(v0.size()) != n) throw Error(ErrorKind::Shape, "solve_v: v0 length differs from model.n");
  const Stepper stepper(model, config.scheme, config.R, 0.0);
  std::vector<ShellState> out;
  out.reserve(conv.times.size());
  ShellState v = v0, w(static_cast<std::size_t>(n)), f;
  out.push_back(v);
  for (std::size_t k = 0; k + 1 < conv.times.size(); ++k) {
    const double h = conv.times[k + 1] - conv.times[k];
    if (h > 0) {
      const ShellState& S = conv.values[k];
      for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i)] + S[static_cast<std::size_t>(i)];
      stepper.forcing(w, f);  // drift 0: only -B^R(v+S, v+S)
      for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        v[idx] = stepper.damp(i, h) * v[idx] + stepper.gain(i, h) * f[idx];
      }
    }
    const double nrm = std::sqrt(norm_sq(v));
    if (!std::isfinite(nrm) || nrm > kBlowUpNorm) throw BlowUpError(conv.times[k + 1], nrm);
    out.push_back(v);
  }
  return out;
}

double sup_distance_on_common_times(const std::vector<double>& ta, const std::vector<ShellState>& a,
                                    const std::vector<double>& tb, const std::vector<ShellState>& b) {
  double sup = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    while (j < tb.size() && tb[j] < ta[i]) ++j;
    if (j == tb.size()) break;
    if (tb[j] != ta[i]) continue;
    double d = 0.0;
    for (std::size_t k = 0; k < a[i].size(); ++k) d += std::norm(a[i][k] - b[j][k]);
    sup = std::max(sup, std::sqrt(d));
  }
  return sup;
}

RefinementReport galerkin_refinement(const ModelParams& params, const LevyMeasureSpec& spec,
                                     const SdePathConfig& config, const std::vector<int>& n_coarse, int n_fine,
                                     const ShellState& xi_fine, std::uint64_t stream_id) {
  ModelParams fine_params = params;
  fine_params.n = n_fine;
  const ShellModel fine(fine_params);
  for (int nc : n_coarse)
    if (nc < 2 || nc > n_fine) throw Error(ErrorKind::Domain, "galerkin_refinement: need 2 <= n_coarse <= n_fine");
  if (static_cast<int>(xi_fine.size()) != n_fine) throw Error(ErrorKind::Shape, "galerkin_refinement: xi length differs from n_fine");

  const JumpPath noise = sample_noise(fine_params, spec, config, stream_id);
  const Trajectory uf = simulate(fine, config, xi_fine, noise);

  RefinementReport rep;
  rep.n_fine = n_fine;
  rep.n_coarse = n_coarse;
  for (int nc : n_coarse) {
    ModelParams cp = params;
    cp.n = nc;
    const ShellModel coarse(cp);
    const ShellState xi(xi_fine.begin(), xi_fine.begin() + nc);
    SimulateOptions opt;
    opt.active_components = real_dimension(nc);
    const Trajectory uc = simulate(coarse, config, xi, noise, opt);
    // Inactive components still split the grid, so both paths share it.
    double err = 0.0;
    for (std::size_t k = 0; k + 1 < uc.times.size(); ++k) {
      const double h = uc.times[k + 1] - uc.times[k];
      double d = 0.0;
      for (int i = 0; i < nc; ++i)
        d += std::norm(uc.states[k][static_cast<std::size_t>(i)] - uf.states[k][static_cast<std::size_t>(i)]);
      err += h * d;
    }
    rep.l2_error.push_back(err);
  }
  rep.monotone = true;
  for (std::size_t i = 1; i < rep.l2_error.size(); ++i)
    if (rep.l2_error[i] > rep.l2_error[i - 1]) rep.monotone = false;
  return rep;
}

}  // namespace levyshell
