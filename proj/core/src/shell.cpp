#include "levyshell/shell.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "levyshell/errors.hpp"

namespace levyshell {

using cd = std::complex<double>;

// Plain product; std::complex adds an inf/nan recovery branch the bilinear maps never need.
inline cd mul(cd x, cd y) { return {x.real() * y.real() - x.imag() * y.imag(), x.real() * y.imag() + x.imag() * y.real()}; }

const char* to_string(ShellModelKind kind) { return kind == ShellModelKind::GOY ? "GOY" : "SABRA"; }

std::vector<std::string> ModelParams::violations() const {
  std::vector<std::string> out;
  auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(kappa) || !(kappa > 0)) out.push_back("model.kappa must be > 0");
  if (!finite(a)) out.push_back("model.a must be finite");
  if (!finite(b)) out.push_back("model.b must be finite");
  if (!finite(k0) || !(k0 > 0)) out.push_back("model.k0 must be > 0");
  if (!finite(lambda) || !(lambda > 1)) out.push_back("model.lambda must be > 1");
  if (!finite(theta) || !(theta > 0.25 && theta < 0.5))
    out.push_back("model.theta violates the noise-coefficient condition θ ∈ (1/4,1/2)");
  if (n < 2) out.push_back("model.n must be >= 2");
  if (out.empty()) {
    // lambda^{2n} must stay representable.
    if (!std::isfinite(eigenvalue(n)) || !(noise_weight(n) > 0))
      out.push_back("model.n too large: lambda_n overflows double precision");
  }
  return out;
}

void ModelParams::validate() const {
  const auto bad = violations();
  if (bad.empty()) return;
  std::ostringstream os;
  for (std::size_t i = 0; i < bad.size(); ++i) os << (i ? "; " : "") << bad[i];
  throw Error(ErrorKind::Parameter, os.str());
}

double ModelParams::wavenumber(int j) const { return k0 * std::pow(lambda, j); }
double ModelParams::eigenvalue(int j) const { return k0 * std::pow(lambda, 2 * j); }
double ModelParams::noise_weight(int j) const { return std::pow(eigenvalue(j), -theta); }

double ModelParams::beta_power_sum(double p) const {
  // beta_j^p = k0^{-theta p} r^j with r = lambda^{-2 theta p}
  const double r = std::pow(lambda, -2.0 * theta * p);
  return std::pow(k0, -theta * p) * r / (1.0 - r);
}

double coordinate(const ShellState& u, int m) {
  const cd& z = u[static_cast<std::size_t>(m / 2)];
  return m % 2 == 0 ? z.real() : z.imag();
}

double& coordinate(ShellState& u, int m) {
  auto* parts = reinterpret_cast<double*>(u.data());
  return parts[m];
}

ShellState from_coordinates(const std::vector<double>& x) {
  if (x.size() % 2 != 0) throw Error(ErrorKind::Shape, "from_coordinates: odd coordinate count");
  ShellState u(x.size() / 2);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = {x[2 * i], x[2 * i + 1]};
  return u;
}

std::vector<double> to_coordinates(const ShellState& u) {
  std::vector<double> x(2 * u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    x[2 * i] = u[i].real();
    x[2 * i + 1] = u[i].imag();
  }
  return x;
}

double inner(const ShellState& u, const ShellState& v) {
  if (u.size() != v.size()) throw Error(ErrorKind::Shape, "inner: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i].real() * v[i].real() + u[i].imag() * v[i].imag();
  return s;
}

double norm_sq(const ShellState& u) {
  double s = 0.0;
  for (const auto& z : u) s += std::norm(z);
  return s;
}

ShellModel::ShellModel(const ModelParams& params) : params_(params) {
  params_.validate();
  const int n = params_.n;
  k_.resize(static_cast<std::size_t>(n) + 1);
  lam_.resize(static_cast<std::size_t>(n));
  beta_.resize(static_cast<std::size_t>(n));
  for (int j = 1; j <= n + 1; ++j) k_[static_cast<std::size_t>(j - 1)] = params_.wavenumber(j);
  for (int j = 1; j <= n; ++j) {
    lam_[static_cast<std::size_t>(j - 1)] = params_.eigenvalue(j);
    beta_[static_cast<std::size_t>(j - 1)] = params_.noise_weight(j);
  }
}

double ShellModel::power_norm_sq(const ShellState& u, double s) const {
  if (static_cast<int>(u.size()) != params_.n) throw Error(ErrorKind::Shape, "power_norm_sq: length mismatch");
  double acc = 0.0;
  const double e = 2.0 * s;
  if (e == 1.0) {
    for (std::size_t i = 0; i < u.size(); ++i) acc += lam_[i] * std::norm(u[i]);
  } else if (e == -1.0) {
    for (std::size_t i = 0; i < u.size(); ++i) acc += std::norm(u[i]) / lam_[i];
  } else {
    for (std::size_t i = 0; i < u.size(); ++i) acc += std::pow(lam_[i], e) * std::norm(u[i]);
  }
  return acc;
}

void ShellModel::bilinear(const ShellState& u, const ShellState& v, ShellState& out) const {
  const int n = params_.n;
  if (static_cast<int>(u.size()) != n || static_cast<int>(v.size()) != n)
    throw Error(ErrorKind::Shape, "nonlinearity: state length differs from model.n");
  out.resize(static_cast<std::size_t>(n));
  const double a = params_.a;
  const double b = params_.b;
  const cd* U = u.data();
  const cd* V = v.data();
  const double* k = k_.data();
  const bool sabra = params_.model == ShellModelKind::SABRA;
  for (int i = 0; i < n; ++i) {
    // Shell index i is shell n = i+1; k[i] = k_n, k[i+1] = k_{n+1}, k[i-1] = k_{n-1}.
    cd s{0.0, 0.0};
    if (sabra) {
      if (i + 2 < n) s += mul(a * k[i + 1] * std::conj(U[i + 1]), V[i + 2]);
      if (i >= 1 && i + 1 < n) s += mul(b * k[i] * std::conj(U[i - 1]), V[i + 1]);
      if (i >= 2) s += mul(a * k[i - 1] * U[i - 1], V[i - 2]);
      if (i >= 2) s += mul(b * k[i - 1] * U[i - 2], V[i - 1]);
      out[static_cast<std::size_t>(i)] = cd{s.imag(), -s.real()};  // -i s
    } else {
      if (i + 2 < n) s += mul(a * k[i + 1] * std::conj(U[i + 1]), std::conj(V[i + 2]));
      if (i >= 1 && i + 1 < n) s += mul(b * k[i] * std::conj(U[i - 1]), std::conj(V[i + 1]));
      if (i >= 2) s -= mul(a * k[i - 1] * std::conj(U[i - 1]), std::conj(V[i - 2]));
      if (i >= 2) s -= mul(b * k[i - 1] * std::conj(U[i - 2]), std::conj(V[i - 1]));
      out[static_cast<std::size_t>(i)] = cd{-s.imag(), s.real()};  // i s
    }
  }
}

ShellState ShellModel::bilinear(const ShellState& u, const ShellState& v) const {
  ShellState out;
  bilinear(u, v, out);
  return out;
}

ShellState apply_A(const ModelParams& params, const ShellState& u, double power) {
  params.validate();
  if (static_cast<int>(u.size()) != params.n) throw Error(ErrorKind::Shape, "apply_A: length mismatch");
  ShellState out(u.size());
  for (int j = 1; j <= params.n; ++j)
    out[static_cast<std::size_t>(j - 1)] = std::pow(params.eigenvalue(j), power) * u[static_cast<std::size_t>(j - 1)];
  return out;
}

ShellState nonlinearity(const ModelParams& params, const ShellState& u, const ShellState& v) {
  return ShellModel(params).bilinear(u, v);
}

double cutoff_rho(double x) {
  if (!(x >= 0.0)) throw Error(ErrorKind::Domain, "cutoff_rho: argument must be >= 0");
  if (x <= 1.0) return 1.0;
  if (x >= 2.0) return 0.0;
  const double e = 1.0 / (2.0 - x) - 1.0 / (x - 1.0);
  if (e > 700.0) return 0.0;
  if (e < -700.0) return 1.0;
  return 1.0 / (1.0 + std::exp(e));
}

CutoffValue cutoff_rho_with_slope(double x) {
  if (!(x >= 0.0)) throw Error(ErrorKind::Domain, "cutoff_rho: argument must be >= 0");
  if (x <= 1.0) return {1.0, 0.0};
  if (x >= 2.0) return {0.0, 0.0};
  const double p = 2.0 - x;
  const double q = x - 1.0;
  // r = psi(x-1) / psi(2-x)
  const double e = 1.0 / p - 1.0 / q;
  if (e > 700.0) return {0.0, 0.0};
  if (e < -700.0) return {1.0, 0.0};
  const double r = std::exp(e);
  const double rho = 1.0 / (1.0 + r);
  const double de = 1.0 / (p * p) + 1.0 / (q * q);
  const double dde = 2.0 / (p * p * p) - 2.0 / (q * q * q);
  const double s = 1.0 + r;
  const double slope = -r / (s * s) * de;
  const double curvature = -r * (de * de + dde) / (s * s) + 2.0 * r * r * de * de / (s * s * s);
  return {rho, slope, curvature};
}

void truncated_nonlinearity(const ShellModel& model, double R, const ShellState& u, ShellState& out) {
  if (!(R > 0)) throw Error(ErrorKind::Domain, "truncated_nonlinearity: R must be > 0");
  const double rho = cutoff_rho(norm_sq(u) / R);
  if (rho == 0.0) {
    out.assign(u.size(), cd{0.0, 0.0});
    return;
  }
  model.bilinear(u, u, out);
  if (rho != 1.0)
    for (auto& z : out) z *= rho;
}

ShellState truncated_nonlinearity(const ModelParams& params, double R, const ShellState& u) {
  ShellState out;
  truncated_nonlinearity(ShellModel(params), R, u, out);
  return out;
}

void linearized_nonlinearity(const ShellModel& model, double R, const ShellState& u, const ShellState& w,
                             ShellState& out, ShellState& scratch) {
  if (!(R > 0)) throw Error(ErrorKind::Domain, "linearized_nonlinearity: R must be > 0");
  const CutoffValue c = cutoff_rho_with_slope(norm_sq(u) / R);
  model.bilinear(u, w, out);
  model.bilinear(w, u, scratch);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c.value * (out[i] + scratch[i]);
  if (c.slope != 0.0) {
    const double coeff = c.slope * 2.0 * inner(u, w) / R;
    model.bilinear(u, u, scratch);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += coeff * scratch[i];
  }
}

void second_variation_nonlinearity(const ShellModel& model, double R, const ShellState& u, const ShellState& a,
                                   const ShellState& b, ShellState& out, ShellState& scratch) {
  model.bilinear(a, b, out);
  model.bilinear(b, a, scratch);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += scratch[i];
  if (R <= 0) return;
  const CutoffValue c = cutoff_rho_with_slope(norm_sq(u) / R);
  for (auto& z : out) z *= c.value;
  if (c.slope == 0.0 && c.curvature == 0.0) return;
  const double ua = 2.0 * inner(u, a) / R, ub = 2.0 * inner(u, b) / R, ab = 2.0 * inner(a, b) / R;
  model.bilinear(u, u, scratch);
  const double cuu = c.curvature * ua * ub + c.slope * ab;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += cuu * scratch[i];
  // rho' (2<u,a>/R) (B(u,b) + B(b,u)) and the same with a, b swapped
  ShellState t(u.size());
  model.bilinear(u, b, scratch);
  model.bilinear(b, u, t);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c.slope * ua * (scratch[i] + t[i]);
  model.bilinear(u, a, scratch);
  model.bilinear(a, u, t);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c.slope * ub * (scratch[i] + t[i]);
}

ShellState linearized_nonlinearity(const ModelParams& params, double R, const ShellState& u, const ShellState& w) {
  ShellState out, scratch;
  linearized_nonlinearity(ShellModel(params), R, u, w, out, scratch);
  return out;
}

ShellState random_state(int shells, RngStream& rng, double scale) {
  ShellState u(static_cast<std::size_t>(shells));
  for (auto& z : u) {
    const double re = rng.normal();
    z = {scale * re, scale * rng.normal()};
  }
  return u;
}

namespace {

// Random state, optionally supported on the shells [start, start+4) only.
ShellState sample_probe(int n, RngStream& rng, int start) {
  if (start < 0) return random_state(n, rng);
  ShellState u(static_cast<std::size_t>(n), cd{0.0, 0.0});
  const int stop = std::min(n, start + 4);
  for (int i = start; i < stop; ++i) {
    const double re = rng.normal();
    u[static_cast<std::size_t>(i)] = {re, rng.normal()};
  }
  return u;
}

int random_window(int n, RngStream& rng) {
  const int width = std::min(n, 4);
  return static_cast<int>(rng.uniform() * (n - width + 1));
}

}  // namespace

BilinearConstants estimate_bilinear_constants(const ModelParams& params, int samples, RngStream& rng) {
  const ShellModel model(params);
  const int n = params.n;
  BilinearConstants out{0.0, 0.0, samples};
  ShellState B;
  for (int s = 0; s < samples; ++s) {
    // Odd samples put u and v on one shared window so the triads interact.
    const int start = s % 2 == 1 ? random_window(n, rng) : -1;
    const ShellState u = sample_probe(n, rng, start);
    const ShellState v = sample_probe(n, rng, start);
    model.bilinear(u, v, B);
    const double hu = std::sqrt(norm_sq(u)), hv = std::sqrt(norm_sq(v));
    const double vu = std::sqrt(model.v_norm_sq(u)), vv = std::sqrt(model.v_norm_sq(v));
    if (hu == 0 || hv == 0) continue;
    const double bh = std::sqrt(norm_sq(B));
    out.C0 = std::max(out.C0, std::sqrt(model.vstar_norm_sq(B)) / (hu * hv));
    out.C1 = std::max(out.C1, std::max(bh / (vu * hv), bh / (hu * vv)));
  }
  return out;
}

LipschitzEstimate estimate_truncation_lipschitz(const ModelParams& params, double R, int samples, RngStream& rng) {
  const ShellModel model(params);
  const int n = params.n;
  LipschitzEstimate out{0.0, samples};
  ShellState bu, bw, diff(static_cast<std::size_t>(n));
  for (int s = 0; s < samples; ++s) {
    ShellState u = sample_probe(n, rng, s % 2 == 1 ? random_window(n, rng) : -1);
    const double target = R * 3.0 * rng.uniform();
    const double nu = std::sqrt(norm_sq(u));
    for (auto& z : u) z *= std::sqrt(target) / nu;
    ShellState w = u;
    const double eps = std::pow(10.0, -3.0 * rng.uniform()) * std::sqrt(R);
    const ShellState dir = random_state(n, rng);
    const double nd = std::sqrt(norm_sq(dir));
    for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] += eps * dir[static_cast<std::size_t>(i)] / nd;
    truncated_nonlinearity(model, R, u, bu);
    truncated_nonlinearity(model, R, w, bw);
    for (int i = 0; i < n; ++i) diff[static_cast<std::size_t>(i)] = bu[static_cast<std::size_t>(i)] - bw[static_cast<std::size_t>(i)];
    double duw = 0.0;
    for (int i = 0; i < n; ++i) duw += std::norm(u[static_cast<std::size_t>(i)] - w[static_cast<std::size_t>(i)]);
    if (duw == 0) continue;
    out.C_R = std::max(out.C_R, std::sqrt(model.vstar_norm_sq(diff) / duw));
  }
  return out;
}

}  // namespace levyshell
