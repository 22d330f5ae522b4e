#include "levyshell/bel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <type_traits>

#include "levyshell/errors.hpp"
#include "levyshell/parallel.hpp"

#include <Eigen/Dense>

namespace levyshell {

namespace {

// Tangent map of one substep: w <- damp*w - gain*(rho (B(u,w)+B(w,u)) + rho' 2<u,w>/R B(u,u)).
struct Linearization {
  double rho = 1.0;
  double coeff = 0.0;  // rho'(|u|^2/R) * 2/R, zero for the full equation
};

Linearization linearization_at(const std::optional<double>& R, const ShellState& u) {
  if (!R) return {};
  const CutoffValue c = cutoff_rho_with_slope(norm_sq(u) / *R);
  return {c.value, c.slope * 2.0 / *R};
}

void tangent_update(const ShellModel& model, const Linearization& lin, const ShellState& u, const ShellState& Buu,
                    const std::vector<double>& damp, const std::vector<double>& gain, ShellState& w, ShellState& t1,
                    ShellState& t2) {
  model.bilinear(u, w, t1);
  model.bilinear(w, u, t2);
  const double c = lin.coeff != 0.0 ? lin.coeff * inner(u, w) : 0.0;
  const std::size_t n = w.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::complex<double> d = lin.rho * (t1[i] + t2[i]);
    if (c != 0.0) d += c * Buu[i];
    w[i] = damp[i] * w[i] - gain[i] * d;
  }
}

void scheme_factors(const Stepper& stepper, int n, double h, std::vector<double>& damp, std::vector<double>& gain) {
  for (int i = 0; i < n; ++i) {
    damp[static_cast<std::size_t>(i)] = stepper.damp(i, h);
    gain[static_cast<std::size_t>(i)] = stepper.gain(i, h);
  }
}

}  // namespace

double jump_score(const LevyMeasureSpec& spec, double z) {
  return z * z * log_density_ratio(spec, z).value + 2.0 * z;
}

JacobianFlow jacobian_flow(const ShellModel& model, const SdePathConfig& config, const Trajectory& tr) {
  const int n = model.shells();
  const int d = real_dimension(n);
  const Stepper stepper(model, config.scheme, config.R, 0.0);
  JacobianFlow out;
  out.dim = d;
  out.times = tr.times;
  out.D.reserve(tr.times.size());

  std::vector<ShellState> cols(static_cast<std::size_t>(d), ShellState(static_cast<std::size_t>(n), {0.0, 0.0}));
  for (int k = 0; k < d; ++k) coordinate(cols[static_cast<std::size_t>(k)], k) = 1.0;
  auto snapshot = [&] {
    std::vector<double> D(static_cast<std::size_t>(d) * static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k)
      for (int j = 0; j < d; ++j)
        D[static_cast<std::size_t>(j * d + k)] = coordinate(cols[static_cast<std::size_t>(k)], j);
    return D;
  };
  out.D.push_back(snapshot());

  std::vector<double> damp(static_cast<std::size_t>(n)), gain(static_cast<std::size_t>(n));
  ShellState Buu, t1, t2;
  for (std::size_t i = 0; i + 1 < tr.times.size(); ++i) {
    const double h = tr.times[i + 1] - tr.times[i];
    if (h > 0) {
      const ShellState& u = tr.states[i];
      const Linearization lin = linearization_at(config.R, u);
      if (lin.coeff != 0.0) model.bilinear(u, u, Buu);
      scheme_factors(stepper, n, h, damp, gain);
      for (auto& w : cols) tangent_update(model, lin, u, Buu, damp, gain, w, t1, t2);
    }
    out.D.push_back(snapshot());
  }
  return out;
}

BelWeights bel_weights(const ShellModel& model, const Trajectory& tr, const JacobianFlow& jac,
                       const LevyMeasureSpec& spec) {
  const int d = jac.dim;
  if (jac.D.size() != tr.times.size()) throw Error(ErrorKind::Shape, "bel_weights: Jacobian not aligned with trajectory");
  BelWeights w;
  w.K.assign(static_cast<std::size_t>(d), 0.0);
  w.J.assign(static_cast<std::size_t>(d), 0.0);
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    const int m = tr.jump_component[i];
    if (m < 0) continue;
    const double z = tr.jump_size[i];
    const double inv_beta = 1.0 / model.beta(m / 2);
    const double kz = -2.0 * z * inv_beta;
    const double jz = jump_score(spec, z) * inv_beta;
    w.A += z * z;
    // U is continuous across the jump, so its value at the jump grid point is U(s-).
    for (int k = 0; k < d; ++k) {
      const double u = jac.U(i, k, m);
      w.K[static_cast<std::size_t>(k)] += kz * u;
      w.J[static_cast<std::size_t>(k)] += jz * u;
    }
  }
  w.rejected = !(w.A > 0);
  return w;
}

// ---------------------------------------------------------------------------
// Test functions

TestFunctionSpec TestFunctionSpec::bump_of_norm_sq(std::vector<double> center, double scale) {
  if (!(scale > 0)) throw Error(ErrorKind::Domain, "bump_of_norm_sq: scale must be > 0");
  TestFunctionSpec f;
  f.kind_ = Kind::BumpOfNormSq;
  f.vec_ = std::move(center);
  f.scale_ = scale;
  return f;
}

TestFunctionSpec TestFunctionSpec::cosine_of_coordinate(int k, double frequency) {
  if (k < 1) throw Error(ErrorKind::Domain, "cosine_of_coordinate: coordinates are counted from 1");
  TestFunctionSpec f;
  f.kind_ = Kind::CosineOfCoordinate;
  f.coordinate_ = k;
  f.scale_ = frequency;
  return f;
}

TestFunctionSpec TestFunctionSpec::logistic_of_linear(std::vector<double> weights) {
  TestFunctionSpec f;
  f.kind_ = Kind::LogisticOfLinear;
  f.vec_ = std::move(weights);
  return f;
}

TestFunctionSpec TestFunctionSpec::constant(double c) {
  TestFunctionSpec f;
  f.constant_ = true;
  f.amplitude_ = c;
  return f;
}

TestFunctionSpec TestFunctionSpec::scaled(double factor) const {
  TestFunctionSpec f = *this;
  f.amplitude_ *= factor;
  return f;
}

double TestFunctionSpec::value(const std::vector<double>& x) const {
  if (constant_) return amplitude_;
  switch (kind_) {
    case Kind::BumpOfNormSq: {
      if (vec_.size() != x.size()) throw Error(ErrorKind::Shape, "bump_of_norm_sq: center length mismatch");
      double r2 = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - vec_[i]) * (x[i] - vec_[i]);
      return amplitude_ * std::exp(-r2 / (scale_ * scale_));
    }
    case Kind::CosineOfCoordinate:
      if (coordinate_ > static_cast<int>(x.size())) throw Error(ErrorKind::Shape, "cosine_of_coordinate: k out of range");
      return amplitude_ * std::cos(scale_ * x[static_cast<std::size_t>(coordinate_ - 1)]);
    case Kind::LogisticOfLinear: {
      if (vec_.size() != x.size()) throw Error(ErrorKind::Shape, "logistic_of_linear: weight length mismatch");
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += vec_[i] * x[i];
      return amplitude_ / (1.0 + std::exp(-s));
    }
  }
  return 0.0;
}

void TestFunctionSpec::gradient(const std::vector<double>& x, std::vector<double>& out) const {
  out.assign(x.size(), 0.0);
  if (constant_) return;
  switch (kind_) {
    case Kind::BumpOfNormSq: {
      const double v = value(x);
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = -2.0 * (x[i] - vec_[i]) / (scale_ * scale_) * v;
      break;
    }
    case Kind::CosineOfCoordinate: {
      const auto k = static_cast<std::size_t>(coordinate_ - 1);
      out[k] = -amplitude_ * scale_ * std::sin(scale_ * x[k]);
      break;
    }
    case Kind::LogisticOfLinear: {
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += vec_[i] * x[i];
      const double sig = 1.0 / (1.0 + std::exp(-s));
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = amplitude_ * sig * (1.0 - sig) * vec_[i];
      break;
    }
  }
}

double TestFunctionSpec::sup_norm() const { return std::fabs(amplitude_); }

std::string TestFunctionSpec::name() const {
  std::ostringstream os;
  if (constant_) {
    os << "Constant(" << amplitude_ << ")";
    return os.str();
  }
  switch (kind_) {
    case Kind::BumpOfNormSq: os << "BumpOfNormSq(scale=" << scale_ << ")"; break;
    case Kind::CosineOfCoordinate: os << "CosineOfCoordinate(" << coordinate_ << "," << scale_ << ")"; break;
    case Kind::LogisticOfLinear: os << "LogisticOfLinear"; break;
  }
  if (amplitude_ != 1.0) os << "*" << amplitude_;
  return os.str();
}

// ---------------------------------------------------------------------------
// Ensemble pass
//
// Estimator. The simulated chain is X_{r+1} = Psi_r(X_r) plus the jumps b_i z_i
// (b_i = beta e_{j_i}) at nodes tau_i. In terminal coordinates jump i moves
// X_N along v_i = L_{tau_i} b_i, with L_r = A_{N-1}...A_r the product of step
// Jacobians. With rho(z) = z^2 - delta_cut^2 and G = sum_i rho_i v_i v_i^T,
// shifting each z_i by eps h_i, h_i = rho_i v_i^T G^{-1} D_N e_k, moves X_N by
// eps D_N e_k, hence
//   d/dx_k E Phi(X_N) = -E[Phi(X_N) sum_i (d/dz_i h_i + h_i g'/g(z_i))].
// rho vanishes at |z| = delta_cut so the restricted jump law leaves no
// boundary term. d/dz_i h_i involves d/dz_i v_l and d/dz_i D_N, which are sums
// over steps r of L_{r+1} Psi_r''[a_i(r), .] with a_i(r) the forward-propagated
// jump direction; those sums are collected in a second forward sweep. No
// inverse of the flow is formed, so stiff shells stay well conditioned.

namespace {

struct ChunkAccumulator {
  // Indexed [phi][coordinate].
  std::vector<std::vector<RunningStats>> bel, lemma, fd, pathwise;
  RunningStats A;
  std::vector<RunningStats> K, J;
  FlowEnsembleStats flow;
  std::size_t samples = 0, rejected = 0, failed = 0;

  ChunkAccumulator(std::size_t phis, std::size_t d) {
    bel.assign(phis, std::vector<RunningStats>(d));
    lemma.assign(phis, std::vector<RunningStats>(d));
    fd.assign(phis, std::vector<RunningStats>(d));
    pathwise.assign(phis, std::vector<RunningStats>(d));
    K.assign(d, RunningStats{});
    J.assign(d, RunningStats{});
  }

  void merge(const ChunkAccumulator& o) {
    for (std::size_t p = 0; p < bel.size(); ++p)
      for (std::size_t k = 0; k < bel[p].size(); ++k) {
        bel[p][k].merge(o.bel[p][k]);
        lemma[p][k].merge(o.lemma[p][k]);
        fd[p][k].merge(o.fd[p][k]);
        pathwise[p][k].merge(o.pathwise[p][k]);
      }
    for (std::size_t k = 0; k < K.size(); ++k) {
      K[k].merge(o.K[k]);
      J[k].merge(o.J[k]);
    }
    A.merge(o.A);
    flow.inv_A2.merge(o.flow.inv_A2);
    flow.inv_A4.merge(o.flow.inv_A4);
    flow.flow_energy.merge(o.flow.flow_energy);
    samples += o.samples;
    rejected += o.rejected;
    failed += o.failed;
  }
};

// True when B vanishes identically on this shell count (e.g. two shells).
bool has_nonlinearity(const ShellModel& model) {
  const auto n = static_cast<std::size_t>(model.shells());
  ShellState u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = {1.0 + 0.37 * static_cast<double>(i), 0.61 - 0.23 * static_cast<double>(i)};
    v[i] = {0.29 + 0.41 * static_cast<double>(i), 1.13 + 0.17 * static_cast<double>(i)};
  }
  const ShellState b1 = model.bilinear(u, v), b2 = model.bilinear(v, u);
  return norm_sq(b1) + norm_sq(b2) > 0.0;
}

struct JumpRecord {
  std::size_t node = 0;
  int component = 0;
  double rho = 0.0, drho = 0.0, score = 0.0;  // rho, rho', rho' + rho g'/g
};

// Nonzero entries of (B(e_p, e_q) + B(e_q, e_p))_m in real coordinates,
// listed for both orders of (p, q).
struct BilinearEntry {
  int m, p, q;
  double value;
};

std::vector<BilinearEntry> symmetric_bilinear_table(const ShellModel& model) {
  const int d = real_dimension(model.shells());
  const auto n = static_cast<std::size_t>(model.shells());
  std::vector<BilinearEntry> t;
  ShellState a(n), b(n), o1, o2;
  for (int p = 0; p < d; ++p)
    for (int q = p; q < d; ++q) {
      std::fill(a.begin(), a.end(), std::complex<double>{});
      std::fill(b.begin(), b.end(), std::complex<double>{});
      coordinate(a, p) = 1.0;
      coordinate(b, q) = 1.0;
      model.bilinear(a, b, o1);
      model.bilinear(b, a, o2);
      for (int m = 0; m < d; ++m) {
        const double v = coordinate(o1, m) + coordinate(o2, m);
        if (v == 0.0) continue;
        t.push_back({m, p, q, v});
        if (p != q) t.push_back({m, q, p, v});
      }
    }
  return t;
}

// Second-order data of one substep. With c1 = 2 rho'/R and c2 = 4 rho''/R^2
// (both zero for the full equation),
//   Psi''[e_p, e_q]_m = -g_m (rho Bs_mpq + buu_m (c2 x_p x_q + c1 [p = q]) + c1 (x_p C_mq + x_q C_mp)).
template <class Mat, class Vec>
struct StepCurvature {
  Vec x, buu, g;  // state, B(u,u), per-coordinate gain
  Mat C;          // C(m, p) = (B(u, e_p) + B(e_p, u))_m
  double rho = 1.0, c1 = 0.0, c2 = 0.0;
};

// Dim is the real dimension when known at compile time (small shell counts
// dominate the cost), Eigen::Dynamic otherwise.
template <int Dim>
class PathKernel {
  using Mat = Eigen::Matrix<double, Dim, Dim>;
  using Vec = Eigen::Matrix<double, Dim, 1>;
  using JumpMat = Eigen::Matrix<double, Dim, Eigen::Dynamic>;
  using Curvature = StepCurvature<Mat, Vec>;
  static constexpr bool kFixed = Dim != Eigen::Dynamic;

public:
  PathKernel(const ShellModel& model, const JumpSampler& sampler, const SdePathConfig& config, const ShellState& x,
             const BelCheckOptions& options, const std::vector<BilinearEntry>& bsym, bool nonlinear)
      : model_(model), sampler_(sampler), config_(config), x_(x), opt_(options), bsym_(bsym),
        stepper_(model, config.scheme, config.R, sampler.small_jump_drift()), n_(model.shells()),
        d_(real_dimension(model.shells())), nonlinear_(nonlinear), R_(config.R ? *config.R : 0.0),
        delta2_(config.delta_cut * config.delta_cut) {
    const auto n = static_cast<std::size_t>(n_), d = static_cast<std::size_t>(d_);
    damp_.resize(n);
    gain_.resize(n);
    ew_.resize(d_);
    g_.resize(d_);
    // sqrt of the energy weight lambda^{2 delta}, per real coordinate
    for (int m = 0; m < d_; ++m) ew_(m) = std::pow(model.eigenvalue(m / 2), options.delta);
    fd_states_.assign(opt_.fd_step > 0 ? 2 * d : 0, ShellState(n));
    K_.resize(d);
    J_.resize(d);
    xr_.resize(d_);
    buu_.resize(d_);
    C_.resize(d_, d_);
  }

  void run(std::size_t index, ChunkAccumulator& acc) {
    RngStream rng(config_.seed, derive_stream_id(opt_.stream_purpose, index));
    sampler_.sample_merged(config_.T, d_, rng, events_);
    reset();
    double A = 0.0, energy = 0.0;
    bool failed = false;

    for_each_substep(config_.T, config_.dt, events_, [&](const Substep& st) {
      if (failed) return;
      if (st.h > 0) advance(st.h, energy);
      if (st.event) {
        const int m = st.event->component;
        const double z = st.event->size;
        const double inv_beta = 1.0 / model_.beta(m / 2);
        const double kz = -2.0 * z * inv_beta;
        const double jz = jump_score(sampler_.spec(), z) * inv_beta;
        A += z * z;
        for (int k = 0; k < d_; ++k) {
          K_[static_cast<std::size_t>(k)] += kz * D_(m, k);
          J_[static_cast<std::size_t>(k)] += jz * D_(m, k);
        }
        const double rho = z * z - delta2_;
        jumps_.push_back({steps_, m, rho, 2.0 * z, 2.0 * z + rho * log_density_ratio(sampler_.spec(), z).value});
        stepper_.apply_jump(u_, m, z);
        for (auto& s : fd_states_) stepper_.apply_jump(s, m, z);
      }
      const double nrm = norm_sq(u_);
      if (!std::isfinite(nrm) || nrm > kBlowUpNorm * kBlowUpNorm) failed = true;
    });

    if (failed) {
      ++acc.failed;
      return;
    }
    ++acc.samples;
    X_ = to_coordinates(u_);
    fd_X_.resize(fd_states_.size());
    for (std::size_t i = 0; i < fd_states_.size(); ++i) fd_X_[i] = to_coordinates(fd_states_[i]);
    const bool lemma_ok = A > 0;
    const bool weight_ok = lemma_ok && malliavin_weight();
    if (!weight_ok) ++acc.rejected;
    if (lemma_ok) {
      acc.A.add(A);
      for (std::size_t k = 0; k < K_.size(); ++k) {
        acc.K[k].add(K_[k]);
        acc.J[k].add(J_[k]);
      }
      acc.flow.inv_A2.add(1.0 / (A * A));
      acc.flow.inv_A4.add(1.0 / (A * A * A * A));
    }
    acc.flow.flow_energy.add(energy);

    for (std::size_t p = 0; p < opt_.phis.size(); ++p) {
      const auto& phi = opt_.phis[p];
      const double val = phi.value(X_);
      for (int k = 0; k < d_; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        if (weight_ok) acc.bel[p][kk].add(-val * weight_(k));
        if (lemma_ok) acc.lemma[p][kk].add(val * (K_[kk] / (A * A) - J_[kk] / A));
      }
      phi.gradient(X_, grad_);
      const Vec pw = D_.transpose() * Eigen::Map<const Vec>(grad_.data(), d_);
      for (int k = 0; k < d_; ++k) acc.pathwise[p][static_cast<std::size_t>(k)].add(pw(k));
      for (int k = 0; k < static_cast<int>(fd_X_.size()) / 2; ++k) {
        const double plus = phi.value(fd_X_[static_cast<std::size_t>(2 * k)]);
        const double minus = phi.value(fd_X_[static_cast<std::size_t>(2 * k + 1)]);
        acc.fd[p][static_cast<std::size_t>(k)].add((plus - minus) / (2.0 * opt_.fd_step));
      }
    }
  }

private:
  void reset() {
    u_ = x_;
    D_ = Mat::Identity(d_, d_);
    for (int k = 0; k < static_cast<int>(fd_states_.size()); ++k) {
      fd_states_[static_cast<std::size_t>(k)] = x_;
      coordinate(fd_states_[static_cast<std::size_t>(k)], k / 2) += (k % 2 == 0 ? 1.0 : -1.0) * opt_.fd_step;
    }
    std::fill(K_.begin(), K_.end(), 0.0);
    std::fill(J_.begin(), J_.end(), 0.0);
    jumps_.clear();
    steps_ = 0;
  }

  std::size_t dim() const { return kFixed ? static_cast<std::size_t>(Dim) : static_cast<std::size_t>(d_); }

  // One deterministic substep: the state, the step Jacobian A_r, the flow D,
  // the FD states and, for nonlinear models, the step curvature.
  void advance(double h, double& energy) {
    scheme_factors(stepper_, n_, h, damp_, gain_);
    CutoffValue cut{1.0, 0.0, 0.0};
    if (R_ > 0) cut = cutoff_rho_with_slope(norm_sq(u_) / R_);
    model_.bilinear(u_, u_, Buu_);
    for (int m = 0; m < d_; ++m) {
      xr_(m) = coordinate(u_, m);
      buu_(m) = coordinate(Buu_, m);
    }
    C_.setZero();
    for (const auto& b : bsym_) C_(b.m, b.q) += b.value * xr_(b.p);

    energy += h * (ew_.asDiagonal() * D_).squaredNorm();

    if (steps_ >= steps_A_.size()) {
      steps_A_.emplace_back(d_, d_);
      if (nonlinear_) steps_curv_.emplace_back();
    }
    Mat& Ar = steps_A_[steps_];
    const double coeff = R_ > 0 ? cut.slope * 2.0 / R_ : 0.0;
    for (int m = 0; m < d_; ++m) g_(m) = gain_[static_cast<std::size_t>(m / 2)];
    Ar.noalias() = -(g_.asDiagonal() * (cut.value * C_ + coeff * buu_ * xr_.transpose()));
    for (int m = 0; m < d_; ++m) Ar(m, m) += damp_[static_cast<std::size_t>(m / 2)];
    const Mat Dn = Ar * D_;
    D_ = Dn;
    if (nonlinear_) {
      Curvature& c = steps_curv_[steps_];
      c.x = xr_;
      c.buu = buu_;
      c.g = g_;
      c.C = C_;
      c.rho = cut.value;
      c.c1 = coeff;
      c.c2 = R_ > 0 ? 4.0 * cut.curvature / (R_ * R_) : 0.0;
    }
    ++steps_;

    // forcing = -rho B(u,u) + drift beta, reusing B(u,u)
    const double drift = sampler_.small_jump_drift();
    for (int i = 0; i < n_; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      const double wdr = drift * model_.beta(i);
      const std::complex<double> f(wdr - cut.value * Buu_[idx].real(), wdr - cut.value * Buu_[idx].imag());
      u_[idx] = damp_[idx] * u_[idx] + gain_[idx] * f;
    }
    for (auto& s : fd_states_) {
      stepper_.forcing(s, t1_);
      for (int i = 0; i < n_; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        s[idx] = damp_[idx] * s[idx] + gain_[idx] * t1_[idx];
      }
    }
  }

  // weight_(k) = sum_i (d/dz_i h_i + h_i g'/g); false when G is singular.
  bool malliavin_weight() {
    const std::size_t J = jumps_.size();
    if (J == 0) return false;
    const auto Jn = static_cast<Eigen::Index>(J);
    // L_r for r = 0..steps_, L_steps = I.
    if (L_.size() < steps_ + 1) L_.resize(steps_ + 1);
    L_[steps_] = Mat::Identity(d_, d_);
    for (std::size_t r = steps_; r-- > 0;) L_[r].noalias() = L_[r + 1] * steps_A_[r];

    V_.resize(d_, Jn);
    for (std::size_t i = 0; i < J; ++i) {
      const auto& jr = jumps_[i];
      V_.col(static_cast<Eigen::Index>(i)) = model_.beta(jr.component / 2) * L_[jr.node].col(jr.component);
    }
    Mat G = Mat::Zero(d_, d_);
    for (std::size_t i = 0; i < J; ++i) {
      const auto c = V_.col(static_cast<Eigen::Index>(i));
      G.noalias() += jumps_[i].rho * c * c.transpose();
    }
    Vec scale(d_);
    for (int k = 0; k < d_; ++k) {
      if (!(G(k, k) > 0)) return false;
      scale(k) = 1.0 / std::sqrt(G(k, k));
    }
    ldlt_.compute(scale.asDiagonal() * G * scale.asDiagonal());
    if (ldlt_.info() != Eigen::Success || !(ldlt_.rcond() > 1e-12)) return false;
    // columns pi_i = G^{-1} v_i
    Pi_ = scale.asDiagonal() * ldlt_.solve(scale.asDiagonal() * V_);

    Vec x = Vec::Zero(d_);
    for (std::size_t i = 0; i < J; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      const auto& jr = jumps_[i];
      x += (jr.score - jr.rho * jr.drho * V_.col(c).dot(Pi_.col(c))) * V_.col(c);
    }
    Vec direct = Vec::Zero(d_);
    if (nonlinear_) {
      const Mat Qm = scale.asDiagonal() * ldlt_.solve(scale.asDiagonal() * D_);
      second_order(Qm, x, direct);
    }
    const Vec gx = scale.asDiagonal() * ldlt_.solve(scale.asDiagonal() * x);
    weight_ = D_.transpose() * gx + direct;
    return weight_.allFinite();
  }

  // Adds the d/dz terms of v_l and D_N: terminal-frame part to x, the part
  // already contracted against each e_k to direct. Only the combinations
  // M = sum (rho_i a_i a_i^T - C_il a_i a_l^T) and E = D_r - U_r enter, so those
  // are propagated directly.
  void second_order(const Mat& Qm, Vec& x, Vec& direct) {
    Mat M = Mat::Zero(d_, d_), Pm = Mat::Zero(d_, d_), E = Mat::Identity(d_, d_), N(d_, d_), T(d_, d_);
    Vec b(d_), t(d_), v(d_), w(d_), Nx(d_);
    std::size_t j = 0;
    for (std::size_t r = 0; r < steps_; ++r) {
      for (; j < jumps_.size() && jumps_[j].node == r; ++j) {
        const auto& jr = jumps_[j];
        const auto c = static_cast<Eigen::Index>(j);
        b.setZero();
        b(jr.component) = model_.beta(jr.component / 2);
        t.noalias() = jr.rho * (Pm.transpose() * V_.col(c));
        const double self = jr.rho - jr.rho * jr.rho * V_.col(c).dot(Pi_.col(c));
        M.noalias() += self * b * b.transpose() - t * b.transpose() - b * t.transpose();
        Pm.noalias() += jr.rho * Pi_.col(c) * b.transpose();
        E.noalias() -= jr.rho * b * (Qm.transpose() * V_.col(c)).transpose();
      }
      const Curvature& k = steps_curv_[r];
      // v = Psi''[M], w_s = sum_{m,p} N_mp Psi''[e_p, e_s]_m with N = L_{r+1}^T Pm
      N.noalias() = L_[r + 1].transpose() * Pm;
      N = (-k.g).asDiagonal() * N;
      const double xMx = k.x.dot(M * k.x);
      const Vec Mx = M * k.x + M.transpose() * k.x;
      v = k.buu * (k.c2 * xMx + k.c1 * M.trace()) + k.c1 * (k.C * Mx);
      Nx.noalias() = N * k.x;
      w = k.x * (k.c2 * k.buu.dot(Nx) + k.c1 * N.cwiseProduct(k.C).sum()) + k.c1 * (N.transpose() * k.buu) +
          k.c1 * (k.C.transpose() * Nx);
      for (const auto& e : bsym_) {
        v(e.m) += k.rho * e.value * M(e.p, e.q);
        w(e.q) += k.rho * e.value * N(e.m, e.p);
      }
      v = (-k.g).cwiseProduct(v);
      x.noalias() += L_[r + 1] * v;
      direct.noalias() += E.transpose() * w;
      const Mat& Ar = steps_A_[r];
      T.noalias() = Ar * M;
      M.noalias() = T * Ar.transpose();
      T.noalias() = Pm * Ar.transpose();
      Pm = T;
      T.noalias() = Ar * E;
      E = T;
    }
  }

  const ShellModel& model_;
  const JumpSampler& sampler_;
  const SdePathConfig& config_;
  const ShellState& x_;
  const BelCheckOptions& opt_;
  const std::vector<BilinearEntry>& bsym_;
  Stepper stepper_;
  int n_, d_;
  bool nonlinear_;
  double R_, delta2_;
  std::vector<double> damp_, gain_, K_, J_, X_, grad_;
  Vec ew_, xr_, buu_, g_;
  std::vector<NoiseEvent> events_;
  ShellState u_, Buu_, t1_;
  std::vector<ShellState> fd_states_;
  std::vector<std::vector<double>> fd_X_;
  std::vector<JumpRecord> jumps_;
  // Per-step records; capacity is reused across paths.
  std::size_t steps_ = 0;
  std::vector<Mat> steps_A_, L_;
  std::vector<Curvature, Eigen::aligned_allocator<Curvature>> steps_curv_;
  Mat D_, C_;
  JumpMat V_, Pi_;
  Eigen::LDLT<Mat> ldlt_;
  Vec weight_;
};

CoordinateEstimate to_estimate(const RunningStats& s) { return {s.mean(), s.standard_error()}; }

}  // namespace

BelCheckResult bel_check(const ShellModel& model, const LevyMeasureSpec& spec, const SdePathConfig& config,
                         const ShellState& x, const BelCheckOptions& options) {
  config.validate();
  if (options.M < 1000) throw Error(ErrorKind::Domain, "bel: need M >= 1000 samples");
  if (!(config.T > 0)) throw Error(ErrorKind::Domain, "bel: t must be > 0");
  if (static_cast<int>(x.size()) != model.shells()) throw Error(ErrorKind::Shape, "bel: x length differs from model.n");
  if (options.phis.empty()) throw Error(ErrorKind::Domain, "bel: no test function given");
  if (options.delta < 0 || options.delta > 0.5) throw Error(ErrorKind::Domain, "bel: delta must lie in [0, 1/2]");

  const JumpSampler sampler(spec, config.delta_cut);
  const std::size_t d = static_cast<std::size_t>(real_dimension(model.shells()));
  const bool nonlinear = has_nonlinearity(model);
  const std::vector<BilinearEntry> bsym = symmetric_bilinear_table(model);
  const std::size_t chunk = 1000;
  const std::size_t chunks = (options.M + chunk - 1) / chunk;
  std::vector<ChunkAccumulator> parts(chunks, ChunkAccumulator(options.phis.size(), d));
  const auto run_chunks = [&](auto tag) {
    using Kernel = typename decltype(tag)::type;
    parallel_for(chunks, options.workers, [&](std::size_t c) {
      Kernel kernel(model, sampler, config, x, options, bsym, nonlinear);
      const std::size_t end = std::min(options.M, (c + 1) * chunk);
      for (std::size_t i = c * chunk; i < end; ++i) kernel.run(i, parts[c]);
    });
  };
  switch (d) {
    case 4: run_chunks(std::type_identity<PathKernel<4>>{}); break;
    case 6: run_chunks(std::type_identity<PathKernel<6>>{}); break;
    case 8: run_chunks(std::type_identity<PathKernel<8>>{}); break;
    default: run_chunks(std::type_identity<PathKernel<Eigen::Dynamic>>{}); break;
  }
  ChunkAccumulator total(options.phis.size(), d);
  for (const auto& p : parts) total.merge(p);

  BelCheckResult out;
  out.t = config.T;
  out.flow = total.flow;
  out.flow.delta = options.delta;
  const double rejected_fraction =
      total.samples > 0 ? static_cast<double>(total.rejected) / static_cast<double>(total.samples) : 1.0;
  if (rejected_fraction > 0.5) {
    std::ostringstream os;
    os << "bel: " << rejected_fraction * 100 << "% of paths were rejected (no jumps, or jumps in too few components) at delta_cut="
       << config.delta_cut << "; use a smaller delta_cut or a longer t";
    throw Error(ErrorKind::Infeasible, os.str());
  }
  for (std::size_t p = 0; p < options.phis.size(); ++p) {
    BelEstimate e;
    e.phi = options.phis[p].name();
    e.samples = total.samples;
    e.rejected = total.rejected;
    e.failed = total.failed;
    e.rejected_fraction = rejected_fraction;
    e.mean_A = total.A.mean();
    for (std::size_t k = 0; k < d; ++k) {
      e.bel.push_back(to_estimate(total.bel[p][k]));
      e.lemma.push_back(to_estimate(total.lemma[p][k]));
      e.pathwise.push_back(to_estimate(total.pathwise[p][k]));
      if (options.fd_step > 0) e.fd.push_back(to_estimate(total.fd[p][k]));
      e.mean_K.push_back(total.K[k].mean());
      e.mean_J.push_back(total.J[k].mean());
    }
    out.estimates.push_back(std::move(e));
  }
  return out;
}

BelEstimate bel_gradient(const ShellModel& model, const LevyMeasureSpec& spec, const SdePathConfig& config,
                         const ShellState& x, double t, const TestFunctionSpec& phi, std::size_t M, unsigned workers) {
  SdePathConfig c = config;
  c.T = t;
  if (c.dt > t) c.dt = t;
  BelCheckOptions opt;
  opt.phis = {phi};
  opt.M = M;
  opt.fd_step = 0.0;
  opt.workers = workers;
  return bel_check(model, spec, c, x, opt).estimates.front();
}

GradientBoundReport gradient_bound_check(const ShellModel& model, const LevyMeasureSpec& spec,
                                         const SdePathConfig& config, const BelEstimate& estimate,
                                         const TestFunctionSpec& phi, const FlowEnsembleStats& flow, double t) {
  GradientBoundReport r;
  r.delta = flow.delta;
  const double inf = std::numeric_limits<double>::infinity();
  const double lo = config.delta_cut;

  // Moments of the simulated (restricted) jump law.
  const double m6 = moment_restricted(spec, 6.0, lo, inf);
  const double m3 = signed_moment(spec, 3.0, lo, inf);
  auto score = [&](double z) { return jump_score(spec, z); };
  const double mh2 = integrate_measure(spec, [&](double z) { const double s = score(z); return s * s; }, lo, inf);
  const double mh = integrate_measure(spec, score, lo, inf);

  r.C1 = flow.inv_A2.mean();
  r.C2 = flow.inv_A4.mean();
  r.C1_rel_se = r.C1 > 0 ? flow.inv_A2.standard_error() / r.C1 : inf;
  r.C2_rel_se = r.C2 > 0 ? flow.inv_A4.standard_error() / r.C2 : inf;
  r.inconclusive = !(r.C1_rel_se <= 0.5) || !(r.C2_rel_se <= 0.5);

  r.C_t = std::sqrt(r.C2) * std::sqrt(8.0 * m6 + 8.0 * m3 * m3 * t) +
          std::sqrt(r.C1) * std::sqrt(2.0 * mh2 + 2.0 * mh * mh * t);
  r.C_t_simple = std::sqrt(r.C2) * std::sqrt(1.0 + t) + std::sqrt(r.C1);

  r.prefactor = 0.0;
  for (int i = 0; i < model.shells(); ++i)
    r.prefactor += 2.0 * std::pow(model.beta(i), -2.0) * std::pow(model.eigenvalue(i), -2.0 * flow.delta);
  r.flow_energy = flow.flow_energy.mean();
  r.phi_sup = phi.sup_norm();
  r.rhs = r.C_t * std::sqrt(r.prefactor) * r.phi_sup * std::sqrt(r.flow_energy);

  double l2 = 0.0;
  for (const auto& e : estimate.bel) l2 += e.mean * e.mean;
  r.lhs = std::sqrt(l2);
  r.holds = r.lhs <= r.rhs;
  r.slack = r.lhs > 0 ? r.rhs / r.lhs : inf;
  std::ostringstream os;
  os << (r.inconclusive ? "inconclusive: C_p estimate unstable; " : "") << "|grad| = " << r.lhs << ", bound = " << r.rhs;
  r.note = os.str();
  return r;
}

}  // namespace levyshell
