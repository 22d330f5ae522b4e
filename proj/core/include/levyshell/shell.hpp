#pragma once

#include <complex>
#include <string>
#include <vector>

#include "levyshell/rng.hpp"

namespace levyshell {

enum class ShellModelKind { GOY, SABRA };

const char* to_string(ShellModelKind kind);

struct ModelParams {
  double kappa = 1.0;
  double a = 1.0;
  double b = -0.5;
  double k0 = 1.0;
  double lambda = 2.0;
  double theta = 0.3;
  int n = 32;
  ShellModelKind model = ShellModelKind::SABRA;

  // Every violated invariant; empty when admissible.
  std::vector<std::string> violations() const;
  void validate() const;

  // Shells are numbered 1..n as in the model equations.
  double wavenumber(int j) const;    // k_j = k0 lambda^j
  double eigenvalue(int j) const;    // lambda_j = k0 lambda^{2j}
  double noise_weight(int j) const;  // beta_j = lambda_j^{-theta}
  // sum_{j>=1} beta_j^p in closed geometric form (the infinite-shell tail constant).
  double beta_power_sum(double p) const;
};

// Shell amplitudes u_1..u_n stored at indices 0..n-1; a complex number is the
// real pair (Re, Im).
using ShellState = std::vector<std::complex<double>>;

// Real coordinates: coordinate m is Re u_{m/2+1} for even m and Im u_{m/2+1}
// for odd m. Noise component m drives coordinate m.
inline int real_dimension(int shells) { return 2 * shells; }
double coordinate(const ShellState& u, int m);
double& coordinate(ShellState& u, int m);
ShellState from_coordinates(const std::vector<double>& x);
std::vector<double> to_coordinates(const ShellState& u);

double inner(const ShellState& u, const ShellState& v);  // <u, v> in H
double norm_sq(const ShellState& u);                     // |u|^2

// Precomputed spectrum plus the bilinear maps. Construction validates params.
class ShellModel {
public:
  explicit ShellModel(const ModelParams& params);

  const ModelParams& params() const { return params_; }
  int shells() const { return params_.n; }
  double kappa() const { return params_.kappa; }
  // 0-based accessors for shell index i = j - 1.
  double k(int i) const { return k_[static_cast<std::size_t>(i)]; }
  double eigenvalue(int i) const { return lam_[static_cast<std::size_t>(i)]; }
  double beta(int i) const { return beta_[static_cast<std::size_t>(i)]; }
  const std::vector<double>& eigenvalues() const { return lam_; }
  const std::vector<double>& betas() const { return beta_; }

  // |A^{s} u|^2 = sum lambda_j^{2s} |u_j|^2
  double power_norm_sq(const ShellState& u, double s) const;
  double v_norm_sq(const ShellState& u) const { return power_norm_sq(u, 0.5); }
  double vstar_norm_sq(const ShellState& u) const { return power_norm_sq(u, -0.5); }

  // out = B(u, v) with the Galerkin projection built in. out may not alias u or v.
  void bilinear(const ShellState& u, const ShellState& v, ShellState& out) const;
  ShellState bilinear(const ShellState& u, const ShellState& v) const;

private:
  ModelParams params_;
  std::vector<double> k_;     // k_1 .. k_{n+1}
  std::vector<double> lam_;   // lambda_1 .. lambda_n
  std::vector<double> beta_;  // beta_1 .. beta_n
};

ShellState apply_A(const ModelParams& params, const ShellState& u, double power);
ShellState nonlinearity(const ModelParams& params, const ShellState& u, const ShellState& v);

struct CutoffValue {
  double value;
  double slope;
  double curvature = 0.0;
};

// Smooth cutoff: 1 on [0,1], 0 on [2,inf), psi-ratio transition in between.
double cutoff_rho(double x);
CutoffValue cutoff_rho_with_slope(double x);

// rho(|u|^2/R) B(u,u)
ShellState truncated_nonlinearity(const ModelParams& params, double R, const ShellState& u);
// Directional derivative of u -> rho(|u|^2/R) B(u,u) along w.
ShellState linearized_nonlinearity(const ModelParams& params, double R, const ShellState& u, const ShellState& w);

// Second directional derivative of u -> rho(|u|^2/R) B(u,u) along (a, b);
// R <= 0 selects the full nonlinearity, where it is B(a,b) + B(b,a).
void second_variation_nonlinearity(const ShellModel& model, double R, const ShellState& u, const ShellState& a,
                                   const ShellState& b, ShellState& out, ShellState& scratch);

// Same operations on a prebuilt model; out must not alias the inputs.
void truncated_nonlinearity(const ShellModel& model, double R, const ShellState& u, ShellState& out);
void linearized_nonlinearity(const ShellModel& model, double R, const ShellState& u, const ShellState& w,
                             ShellState& out, ShellState& scratch);

struct BilinearConstants {
  double C0;  // sup |A^{-1/2} B(u,v)| / (|u||v|)
  double C1;  // sup over both H-bounds of |B(u,v)| / (||u|| |v|) and / (|u| ||v||)
  int samples;
};

// Empirical constants from random pairs. Half the samples are localised on a
// window of a few adjacent shells, where the ratios come close to their sup.
BilinearConstants estimate_bilinear_constants(const ModelParams& params, int samples, RngStream& rng);

struct LipschitzEstimate {
  double C_R;  // sup ||B^R(u,u) - B^R(w,w)||_{V*} / |u - w|
  int samples;
};

LipschitzEstimate estimate_truncation_lipschitz(const ModelParams& params, double R, int samples, RngStream& rng);

ShellState random_state(int shells, RngStream& rng, double scale = 1.0);

}  // namespace levyshell
