#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "levyshell/integrator.hpp"
#include "levyshell/levy.hpp"
#include "levyshell/shell.hpp"
#include "levyshell/stats.hpp"

namespace levyshell {

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

inline constexpr std::array<double, 5> kSummaryLevels = {0.05, 0.25, 0.5, 0.75, 0.95};

struct SummaryRow {
  double t = 0.0;
  std::array<double, 5> abs_quantiles{};    // quantiles of |u(t)| at kSummaryLevels
  std::array<double, 5> vnorm_quantiles{};  // quantiles of ||u(t)||
  Estimate abs2;                            // E|u(t)|^2
  Estimate abs4;                            // E|u(t)|^4
  Estimate vnorm2;                          // E||u(t)||^2
  Estimate sup_p;                           // E sup_{s<=t} |u(s)|^p
  Estimate dissipation;                     // kappa E int_0^t ||u||^2 |u|^{p-2} ds
};

struct EnsembleSummary {
  int p = 2;
  std::size_t sample_count = 0;  // paths that reached T
  std::size_t failures = 0;
  bool unreliable = false;       // failure fraction above 1%
  std::vector<SummaryRow> rows;  // one per recorded time, starting at t = 0
  // Smallest C with E sup_{s<=t}|u|^p + dissipation <= |xi|^p + C t on the grid.
  double envelope_constant = 0.0;
  bool finite = true;
  std::size_t poincare_violations = 0;  // samples with ||u||^2 < lambda_1 |u|^2
};

struct EnsembleOptions {
  std::size_t ensemble = 1000;
  int records = 50;  // recorded times after t = 0, spread over the regular grid
  unsigned workers = 1;
  bool noise_off = false;
  std::uint32_t stream_purpose = stream_purpose::moments;
};

EnsembleSummary moment_diagnostics(const ShellModel& model, const LevyMeasureSpec& spec, const SdePathConfig& config,
                                   const ShellState& xi, int p, const EnsembleOptions& options);

// Sum_k beta_k^2 (int z^2 nu)(1 - e^{-2 kappa lambda_k t}) / (2 kappa lambda_k), both real coordinates per shell.
double ou_second_moment(const ShellModel& model, const LevyMeasureSpec& spec, double t);

struct DecayReport {
  double xi_norm_sq = 0.0;
  double horizon = 0.0;          // lambda_1^2 ln 2 / kappa
  std::vector<double> times;
  std::vector<Estimate> energy;  // E|u(t)|^2
  double fitted_rate = 0.0;      // slope of -log E|u|^2 over the times with energy above the noise plateau
  double reference_rate = 0.0;   // kappa / lambda_1^2
  Estimate energy_at_horizon;
  bool decayed = false;          // E|u(horizon)|^2 + 3 SE < |xi|^2 / 2
  std::size_t failures = 0;
};

DecayReport decay_probe(const ShellModel& model, const LevyMeasureSpec& spec, const SdePathConfig& config,
                        const ShellState& xi, const EnsembleOptions& options);

struct ProbabilityEstimate {
  std::size_t successes = 0;
  std::size_t trials = 0;
  double p_hat = 0.0;
  Interval wilson{0.0, 0.0};
  bool excludes_zero = false;
};

struct SmallDeviationProbe {
  ProbabilityEstimate probability;  // P(sup_{[0,T]} |l| < epsilon)
  SmallDeviationVerdict verdict;
};

// One-component paths l(t) = sum of jumps above delta_cut + drift t.
SmallDeviationProbe small_deviation_probe(const LevyMeasureSpec& spec, double T, double epsilon, std::size_t samples,
                                          double delta_cut, std::uint64_t seed, unsigned workers = 1);

struct AccessibilityOptions {
  std::size_t samples = 1000;
  double radius = 5.0;
  double gamma = 1.0;
  double C0 = 0.0;  // 0: estimate from random pairs
  int constant_samples = 20000;
  unsigned workers = 1;
};

struct AccessibilityReport {
  double epsilon = 0.0;     // sup|S| threshold actually probed
  double gamma = 0.0;
  double T0 = 0.0;
  double delta0 = 0.0;
  double C0 = 0.0;
  double noise_floor = 0.0;  // stationary E|S|^2
  ProbabilityEstimate convolution_small;
  std::size_t successes = 0;              // small-convolution paths with |u(T0)|^2 <= gamma for every xi
  double conditional_success_rate = 0.0;
  Interval conditional_wilson{0.0, 0.0};
  double lower_bound = 0.0;               // p_hat_convolution_small * conditional_success_rate
  double worst_final_energy = 0.0;        // max |u(T0)|^2 over accepted paths and xi
  std::size_t failures = 0;
};

// Probe set of initial states: 0, +-radius e_1 (real and imaginary), radius on
// the last shell and a random direction of norm radius.
std::vector<ShellState> accessibility_probe_set(int shells, double radius, std::uint64_t seed);

AccessibilityReport accessibility_probe(const ShellModel& model, const LevyMeasureSpec& spec,
                                        const SdePathConfig& config, const std::vector<ShellState>& xi_set,
                                        const AccessibilityOptions& options);

struct KsPoint {
  double t = 0.0;
  std::string observable;  // "abs", "re_u1", "vnorm"
  double statistic = 0.0;
  double p_value = 0.0;
};

struct ConvergenceOptions {
  std::size_t ensemble = 1000;
  double burn_in = -1.0;  // negative: 5 / (kappa lambda_1)
  double horizon = -1.0;  // negative: 20 / (kappa lambda_1)
  int points = 16;        // KS times from burn_in to horizon inclusive
  unsigned workers = 1;
  std::uint64_t replicate = 0;  // offsets the stream indices of both ensembles
};

struct ConvergenceReport {
  double burn_in = 0.0;
  double horizon = 0.0;
  std::vector<KsPoint> series;
  std::array<double, 3> decay_slope{};  // slope of log KS statistic against t, per observable
  std::size_t failures_a = 0, failures_b = 0;
  bool unreliable = false;
  std::size_t poincare_violations = 0;

  // Minimum p-value over observables at the recorded time closest to t.
  double min_p_value_at(double t) const;
};

ConvergenceReport invariant_measure_convergence(const ShellModel& model, const LevyMeasureSpec& spec,
                                                const SdePathConfig& config, const ShellState& xi_a,
                                                const ShellState& xi_b, const ConvergenceOptions& options);

}  // namespace levyshell
