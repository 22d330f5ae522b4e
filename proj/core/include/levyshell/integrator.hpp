#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "levyshell/levy.hpp"
#include "levyshell/shell.hpp"

namespace levyshell {

enum class Scheme { SemiImplicitEuler, ExponentialEuler };

const char* to_string(Scheme s);

inline constexpr double kBlowUpNorm = 1e12;

struct SdePathConfig {
  double dt = 1e-3;
  double T = 1.0;
  double delta_cut = 1e-3;
  std::uint64_t seed = 0;
  std::optional<double> R;  // absent: full equation
  Scheme scheme = Scheme::SemiImplicitEuler;

  std::vector<std::string> violations() const;
  void validate() const;
  // Number of regular steps; the last one may be shorter than dt.
  std::size_t regular_steps() const;
};

// Walks the augmented grid: regular times i*dt (last one clamped to T) with
// every event time inserted. Each substep ends either at a regular time or at
// an event; event substeps carry the event.
struct Substep {
  double t_end;
  double h;
  const NoiseEvent* event;  // null at regular grid times
};

std::vector<Substep> build_substeps(double T, double dt, std::span<const NoiseEvent> events);

// Allocation-free form of build_substeps for hot loops: fn(const Substep&).
template <class Fn>
void for_each_substep(double T, double dt, std::span<const NoiseEvent> events, Fn&& fn) {
  if (T <= 0) return;
  const auto M = static_cast<std::size_t>(std::ceil(T / dt * (1.0 - 1e-12)));
  double prev = 0.0;
  std::size_t e = 0;
  for (std::size_t i = 1; i <= M; ++i) {
    const double t = i == M ? T : std::min(static_cast<double>(i) * dt, T);
    while (e < events.size() && events[e].time <= t) {
      const double s = events[e].time;
      fn(Substep{s, s - prev, &events[e]});
      prev = s;
      ++e;
    }
    fn(Substep{t, t - prev, nullptr});
    prev = t;
  }
}

// Deterministic part of one substep plus jump insertion. The constant
// small-jump drift is carried as forcing on every real coordinate.
class Stepper {
public:
  Stepper(const ShellModel& model, Scheme scheme, std::optional<double> R, double small_jump_drift);

  const ShellModel& model() const { return model_; }
  Scheme scheme() const { return scheme_; }
  const std::optional<double>& R() const { return R_; }

  // u <- deterministic flow over a substep of length h. scratch is resized as needed.
  void advance(ShellState& u, double h, ShellState& scratch) const;
  // u(s) = u(s-) + beta_j z e_m
  void apply_jump(ShellState& u, int component, double z) const;
  double noise_weight(int component) const { return model_.beta(component / 2); }

  // Linear factors of the scheme for substep h: u+ = damp*u + gain*(forcing).
  double damp(int shell, double h) const;
  double gain(int shell, double h) const;

  // Forcing for the deterministic part: -B^R(u,u) + drift * beta.
  void forcing(const ShellState& u, ShellState& out) const;

private:
  const ShellModel& model_;
  Scheme scheme_;
  std::optional<double> R_;
  double drift_;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<ShellState> states;       // cadlag values; states[0] = initial condition
  std::vector<int> jump_component;      // -1 at regular grid times
  std::vector<double> jump_size;
  JumpPath noise;
  std::optional<std::vector<ShellState>> convolution;
  bool failed = false;
  double failure_time = 0.0;

  // u(s-) at grid point i (equals states[i] away from jumps).
  ShellState left_limit(const ShellModel& model, std::size_t i) const;
};

// Jump path with one component per real coordinate (2n components).
JumpPath sample_noise(const ModelParams& params, const LevyMeasureSpec& spec, const SdePathConfig& config,
                      std::uint64_t stream_id);

ShellState step_galerkin(const ModelParams& params, const SdePathConfig& config, const ShellState& state,
                         double t0, std::span<const NoiseEvent> events_in_step, double small_jump_drift = 0.0);
ShellState step_truncated(const ModelParams& params, const SdePathConfig& config, const ShellState& state,
                          double t0, std::span<const NoiseEvent> events_in_step, double small_jump_drift = 0.0);

struct SimulateOptions {
  bool with_convolution = false;
  bool throw_on_blow_up = true;  // false: mark the trajectory failed and stop
  // Events of components >= active_components are grid points without jumps
  // (used to run a coarse model on the grid of a finer one). -1 means all.
  int active_components = -1;
};

// Integrates full (config.R empty) or truncated dynamics from xi along the given noise.
Trajectory simulate(const ShellModel& model, const SdePathConfig& config, const ShellState& xi,
                    const JumpPath& noise, const SimulateOptions& options = {});

struct ConvolutionPath {
  std::vector<double> times;
  std::vector<ShellState> values;
};

// Exact recursion for each coordinate's Ornstein-Uhlenbeck convolution on the augmented grid.
ConvolutionPath ou_convolution(const ModelParams& params, const SdePathConfig& config, const JumpPath& noise);
ConvolutionPath ou_convolution(const ShellModel& model, const SdePathConfig& config, const JumpPath& noise);

// Deterministic v-equation dv/dt + kappa A v + rho(|v+S|^2/R) B(v+S, v+S) = 0 with S frozen.
std::vector<ShellState> solve_v(const ShellModel& model, const SdePathConfig& config, const ConvolutionPath& conv,
                                const ShellState& v0);

struct RefinementReport {
  std::vector<int> n_coarse;
  int n_fine = 0;
  std::vector<double> l2_error;  // int_0^T |u_coarse - P u_fine|^2 dt
  bool monotone = false;
};

// Runs the fine model and each coarse prefix on one shared jump path.
RefinementReport galerkin_refinement(const ModelParams& params, const LevyMeasureSpec& spec,
                                     const SdePathConfig& config, const std::vector<int>& n_coarse, int n_fine,
                                     const ShellState& xi_fine, std::uint64_t stream_id);

// Sup over the shared grid times of |a - b| for two trajectories integrated on
// the same noise with dt and dt/2 (or any two grids where a's grid is a subset of b's).
double sup_distance_on_common_times(const std::vector<double>& ta, const std::vector<ShellState>& a,
                                    const std::vector<double>& tb, const std::vector<ShellState>& b);

}  // namespace levyshell
