#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "levyshell/rng.hpp"

namespace levyshell {

enum class LevyFamily { TemperedStable, VarianceGamma };

// g(z) = c_plus  z^{-1-alpha} exp(-beta_plus z)    for z > 0
//      = c_minus |z|^{-1-alpha} exp(-beta_minus |z|) for z < 0
struct TemperedStableParams {
  double c_plus = 1.0;
  double c_minus = 1.0;
  double beta_plus = 1.0;
  double beta_minus = 1.0;
  double alpha = 0.5;
};

struct VarianceGammaParams {
  double sigma = 1.0;
  double theta = 0.0;
  double vartheta = 1.0;
};

class LevyMeasureSpec {
public:
  static LevyMeasureSpec tempered_stable(const TemperedStableParams& p);
  static LevyMeasureSpec variance_gamma(const VarianceGammaParams& p);

  // Every violated invariant, empty when the parameters are admissible.
  static std::vector<std::string> violations(const TemperedStableParams& p);
  static std::vector<std::string> violations(const VarianceGammaParams& p);

  LevyFamily family() const { return family_; }
  // The tempered-stable form used for all numerics; variance gamma maps to
  // alpha = 0, c = 1/vartheta.
  const TemperedStableParams& shape() const { return shape_; }
  const std::optional<VarianceGammaParams>& variance_gamma_params() const { return vg_; }

  bool symmetric() const;
  // Side +1 is z > 0, side -1 is z < 0.
  double c(int side) const { return side > 0 ? shape_.c_plus : shape_.c_minus; }
  double beta(int side) const { return side > 0 ? shape_.beta_plus : shape_.beta_minus; }
  double alpha() const { return shape_.alpha; }

  // Smallest z >= 1 with g(side*z) z^4 < 1e-16; quadrature stops there.
  double tail_cut(int side) const;

private:
  LevyMeasureSpec(LevyFamily family, TemperedStableParams shape, std::optional<VarianceGammaParams> vg);

  LevyFamily family_;
  TemperedStableParams shape_;
  std::optional<VarianceGammaParams> vg_;
  double tail_plus_;
  double tail_minus_;
};

double density(const LevyMeasureSpec& spec, double z);

struct DensityRatio {
  double value;           // g'(z)/g(z)
  double bound_constant;  // C with |g'/g| <= C (1 + 1/|z|)
};

DensityRatio log_density_ratio(const LevyMeasureSpec& spec, double z);

// Integral of f(z) g(z) over lo <= |z| <= hi (hi may be infinity). f must be
// O(|z|) at the origin when lo == 0. Breakpoints (in |z|) mark kinks of f.
double integrate_measure(const LevyMeasureSpec& spec, const std::function<double(double)>& f,
                         double lo, double hi, const std::vector<double>& breakpoints = {});

// Integral of |z|^q over R_0, q >= 1.
double moment(const LevyMeasureSpec& spec, double q);
// Integral of |z|^q over lo <= |z| <= hi.
double moment_restricted(const LevyMeasureSpec& spec, double q, double lo, double hi);
// Integral of sign(z) |z|^q over lo <= |z| <= hi.
double signed_moment(const LevyMeasureSpec& spec, double q, double lo, double hi);
// nu({|z| >= lo}).
double tail_mass(const LevyMeasureSpec& spec, double lo);
// Integral of d/dz (z^2 g(z)) over R_0; zero whenever z^2 g vanishes at 0 and infinity.
double compensator_integral(const LevyMeasureSpec& spec);

struct JumpEvent {
  double time;
  double size;
};

struct NoiseEvent {
  double time;
  int component;
  double size;
};

struct JumpPath {
  double horizon = 0.0;
  int component_count = 0;
  std::vector<std::vector<JumpEvent>> events;  // per component, increasing time
  std::vector<double> small_jump_drift;        // per component, -int_{delta<=|z|<=1} z nu(dz)
  double delta_cut = 0.0;

  std::size_t event_count() const;
};

// All events of all components ordered by (time, component).
std::vector<NoiseEvent> merged_events(const JumpPath& path);

// Compound Poisson sampler for nu restricted to |z| >= delta_cut. Sizes come
// from a tabulated inverse CDF with 2048 knots per side, uniform in log|z|.
class JumpSampler {
public:
  static constexpr int kKnots = 2048;

  JumpSampler(const LevyMeasureSpec& spec, double delta_cut, double max_expected_events = 5e7);

  const LevyMeasureSpec& spec() const { return spec_; }
  double delta_cut() const { return delta_cut_; }
  double rate() const { return mass_plus_ + mass_minus_; }
  double rate(int side) const { return side > 0 ? mass_plus_ : mass_minus_; }
  double small_jump_drift() const { return drift_; }

  double draw_size(RngStream& rng) const;
  JumpPath sample(double T, int components, RngStream& rng) const;
  // Same law as sample(), written straight into a merged, time-ordered buffer.
  void sample_merged(double T, int components, RngStream& rng, std::vector<NoiseEvent>& out) const;

private:
  void check_budget(double T, int components) const;
  double invert(int side, double target) const;

  LevyMeasureSpec spec_;
  double delta_cut_;
  double max_expected_events_;
  double mass_plus_ = 0.0;
  double mass_minus_ = 0.0;
  double drift_ = 0.0;
  std::vector<double> log_knots_plus_, cum_plus_;
  std::vector<double> log_knots_minus_, cum_minus_;
};

JumpPath sample_path(const LevyMeasureSpec& spec, double T, double delta_cut, RngStream& rng,
                     int components = 1);

enum class Verdict { Holds, Fails, Undetermined };
const char* to_string(Verdict v);

struct SmallDeviationVerdict {
  Verdict verdict;
  bool type_one;                // int_{|z|<=1} |z| nu(dz) finite
  double type_one_integral;
  double drift;                 // E = -int_{|z|<=1} z nu(dz)
  bool drift_treated_as_zero;   // |E| under quadrature tolerance
  std::string explanation;
};

SmallDeviationVerdict small_deviation_verdict(const LevyMeasureSpec& spec);

struct OrderConditionEstimate {
  double alpha_hat;        // least-squares slope of log F against log(1/eps)
  double liminf_proxy;     // min over the grid of eps^alpha_hat F(eps)
  Verdict verdict;         // Holds when a positive power law is certified
  double head_slope;       // local slope over the largest-eps decade
  double tail_slope;       // local slope over the smallest-eps decade
  std::vector<double> F;
  std::string note;
};

// F(eps) = int (|z y / eps|^2 ^ 1) nu(dz) on a decreasing grid spanning at
// least four decades.
OrderConditionEstimate order_condition_estimate(const LevyMeasureSpec& spec, double y,
                                                const std::vector<double>& epsilon_grid);

}  // namespace levyshell
