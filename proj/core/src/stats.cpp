#include "levyshell/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>

namespace levyshell {

void RunningStats::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

void RunningStats::merge(const RunningStats& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double delta = other.mean_ - mean_;
  const double n = na + nb;
  mean_ += delta * nb / n;
  m2_ += other.m2_ + delta * delta * na * nb / n;
  n_ += other.n_;
}

double RunningStats::variance() const {
  return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
}

double RunningStats::stddev() const { return std::sqrt(variance()); }

double RunningStats::standard_error() const {
  return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
}

Interval wilson_interval(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
    sum += term;
    if (std::fabs(term) < 1e-16 * std::fabs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d)};
}

ChiSquaredResult chi_squared_poisson(std::span<const std::uint64_t> counts, double mean,
                                     double min_expected) {
  if (counts.empty()) throw std::invalid_argument("chi_squared_poisson: no counts");
  if (!(mean > 0.0)) throw std::invalid_argument("chi_squared_poisson: mean must be positive");
  const boost::math::poisson_distribution<double> law(mean);
  const double total = static_cast<double>(counts.size());
  std::uint64_t kmax = *std::max_element(counts.begin(), counts.end());
  std::vector<double> observed(kmax + 1, 0.0);
  for (auto c : counts) observed[c] += 1.0;

  // Cells: left-merged lower tail, single values, right-merged upper tail.
  struct Cell {
    double observed;
    double expected;
  };
  std::vector<Cell> cells;
  std::uint64_t k = 0;
  double obs_acc = 0.0, exp_acc = 0.0;
  for (; k <= kmax; ++k) {
    obs_acc += observed[k];
    exp_acc += total * boost::math::pdf(law, static_cast<double>(k));
    if (exp_acc >= min_expected) {
      cells.push_back({obs_acc, exp_acc});
      obs_acc = exp_acc = 0.0;
    }
  }
  exp_acc += total * boost::math::cdf(boost::math::complement(law, static_cast<double>(kmax)));
  if (!cells.empty()) {
    cells.back().observed += obs_acc;
    cells.back().expected += exp_acc;
  } else {
    cells.push_back({obs_acc, exp_acc});
  }
  // The last kept cell can still be small after merging the tail into it.
  while (cells.size() > 1 && cells.back().expected < min_expected) {
    const Cell last = cells.back();
    cells.pop_back();
    cells.back().observed += last.observed;
    cells.back().expected += last.expected;
  }
  double stat = 0.0;
  for (const auto& c : cells) stat += (c.observed - c.expected) * (c.observed - c.expected) / c.expected;
  const int dof = static_cast<int>(cells.size()) - 1;
  if (dof < 1) return {stat, 0, 1.0};
  const boost::math::chi_squared_distribution<double> chi(dof);
  return {stat, dof, boost::math::cdf(boost::math::complement(chi, stat))};
}

LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("least_squares: need >= 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - intercept - slope * x[i];
    rss += r * r;
  }
  const double se = x.size() > 2 ? std::sqrt(rss / (n - 2.0) / sxx) : 0.0;
  return {intercept, slope, se};
}

double quantile(std::vector<double> sample, double level) {
  if (sample.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(sample.begin(), sample.end());
  const double pos = std::clamp(level, 0.0, 1.0) * static_cast<double>(sample.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sample.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sample[lo] + frac * (sample[hi] - sample[lo]);
}

}  // namespace levyshell
