#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "levyshell/integrator.hpp"
#include "levyshell/levy.hpp"
#include "levyshell/shell.hpp"
#include "levyshell/stats.hpp"

namespace levyshell {

// Jacobian of the discrete flow along one trajectory. Real coordinates are
// indexed as in shell.hpp; D(i)[j*dim + k] = dX_j(t_i)/dx_k.
struct JacobianFlow {
  int dim = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> D;

  // U_{kj}(t_i) = dX^{(j)}/dx_k
  double U(std::size_t i, int k, int j) const { return D[i][static_cast<std::size_t>(j * dim + k)]; }
};

// Propagates all dim = 2n columns of the linearized equation with the
// trajectory's scheme and grid. config.R selects the truncated linearization.
JacobianFlow jacobian_flow(const ShellModel& model, const SdePathConfig& config, const Trajectory& trajectory);

struct BelWeights {
  double A = 0.0;         // sum of z^2 over all simulated jumps
  std::vector<double> K;  // K_k = -2 sum z / beta_j U_{kj}(s-)
  std::vector<double> J;  // J_k = sum (z^2 g'/g + 2z) / beta_j U_{kj}(s-)
  bool rejected = false;  // no jump on the path: A = 0
};

BelWeights bel_weights(const ShellModel& model, const Trajectory& trajectory, const JacobianFlow& jacobian,
                       const LevyMeasureSpec& spec);

// (z^2 g)'/g = z^2 g'/g + 2z
double jump_score(const LevyMeasureSpec& spec, double z);

class TestFunctionSpec {
public:
  enum class Kind { BumpOfNormSq, CosineOfCoordinate, LogisticOfLinear };

  // exp(-|x - center|^2 / scale^2)
  static TestFunctionSpec bump_of_norm_sq(std::vector<double> center, double scale);
  // cos(frequency * x_k), k counted from 1
  static TestFunctionSpec cosine_of_coordinate(int k, double frequency);
  // 1 / (1 + exp(-w.x))
  static TestFunctionSpec logistic_of_linear(std::vector<double> weights);
  static TestFunctionSpec constant(double c);

  TestFunctionSpec scaled(double factor) const;

  double value(const std::vector<double>& x) const;
  void gradient(const std::vector<double>& x, std::vector<double>& out) const;
  double sup_norm() const;
  std::string name() const;
  Kind kind() const { return kind_; }
  bool is_constant() const { return constant_; }

private:
  Kind kind_ = Kind::CosineOfCoordinate;
  bool constant_ = false;
  double amplitude_ = 1.0;
  std::vector<double> vec_;
  double scale_ = 1.0;
  int coordinate_ = 1;
};

struct CoordinateEstimate {
  double mean = 0.0;
  double se = 0.0;
};

struct BelEstimate {
  std::string phi;
  // Integration by parts in the jump sizes with the full covariance matrix of
  // the jump directions; exact for the simulated scheme (see bel.cpp).
  std::vector<CoordinateEstimate> bel;
  std::vector<CoordinateEstimate> lemma;     // E[Phi (K/A^2 - J/A)] with the scalar A
  std::vector<CoordinateEstimate> fd;        // central differences with common random numbers
  std::vector<CoordinateEstimate> pathwise;  // E[grad Phi(X) . dX/dx_k]
  std::size_t samples = 0;
  std::size_t rejected = 0;  // A = 0 or a singular jump covariance
  std::size_t failed = 0;
  double rejected_fraction = 0.0;
  // Raw weight statistics over accepted samples.
  double mean_A = 0.0;
  std::vector<double> mean_K;
  std::vector<double> mean_J;
};

// Ensemble statistics needed by the gradient bound.
struct FlowEnsembleStats {
  double delta = 0.0;
  RunningStats inv_A2;       // A^{-2}, its mean is C_1(t)
  RunningStats inv_A4;       // A^{-4}, its mean is C_2(t)
  RunningStats flow_energy;  // int_0^t |A^delta U|_F^2 ds
};

struct BelCheckOptions {
  std::vector<TestFunctionSpec> phis;
  std::size_t M = 1000;
  double fd_step = 1e-2;  // 0 disables the finite-difference oracle
  double delta = 0.0;     // A^delta in the flow energy
  unsigned workers = 1;
  std::uint32_t stream_purpose = stream_purpose::bel;
};

struct BelCheckResult {
  std::vector<BelEstimate> estimates;  // one per test function
  FlowEnsembleStats flow;
  double t = 0.0;
};

// One Monte Carlo pass: every path carries the state, the Jacobian columns,
// the FD-perturbed states and the weights. The cost grows like (2n)^3 per
// step for nonlinear models, so this is meant for a handful of shells. Path i uses stream
// derive_stream_id(options.stream_purpose, i) of config.seed, and the
// reduction runs over fixed chunks in index order, so results do not depend
// on the worker count.
BelCheckResult bel_check(const ShellModel& model, const LevyMeasureSpec& spec, const SdePathConfig& config,
                         const ShellState& x, const BelCheckOptions& options);

// Gradient of x -> E Phi(X(t,x)) without the FD oracle.
BelEstimate bel_gradient(const ShellModel& model, const LevyMeasureSpec& spec, const SdePathConfig& config,
                         const ShellState& x, double t, const TestFunctionSpec& phi, std::size_t M,
                         unsigned workers = 1);

struct GradientBoundReport {
  double delta = 0.0;
  double lhs = 0.0;           // |BEL estimate| (Euclidean over coordinates)
  double rhs = 0.0;
  bool holds = false;
  bool inconclusive = false;  // C_p unstable
  double slack = 0.0;         // rhs / lhs
  double prefactor = 0.0;     // sum_j beta_j^{-2} lambda_j^{-2 delta} over coordinates
  double flow_energy = 0.0;   // E int |A^delta U|_F^2
  double C1 = 0.0, C1_rel_se = 0.0;
  double C2 = 0.0, C2_rel_se = 0.0;
  double C_t = 0.0;           // constant actually used on the right-hand side
  double C_t_simple = 0.0;    // C_2^{1/2} (1+t)^{1/2} + C_1^{1/2}, reported only
  double phi_sup = 0.0;
  std::string note;
};

GradientBoundReport gradient_bound_check(const ShellModel& model, const LevyMeasureSpec& spec,
                                         const SdePathConfig& config, const BelEstimate& estimate,
                                         const TestFunctionSpec& phi, const FlowEnsembleStats& flow, double t);

}  // namespace levyshell
