#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace levyshell {

// Welford accumulator. merge() makes it a commutative monoid up to rounding;
// callers that need bitwise determinism reduce in a fixed order.
class RunningStats {
public:
  void add(double x);
  void merge(const RunningStats& other);

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const;  // unbiased
  double stddev() const;
  double standard_error() const;

private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct Interval {
  double lower;
  double upper;
};

// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

struct KsResult {
  double statistic;
  double p_value;
};

// Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov
// distribution and the usual small-sample correction of the argument.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);
double kolmogorov_survival(double lambda);

struct ChiSquaredResult {
  double statistic;
  int degrees_of_freedom;
  double p_value;
};

// Goodness of fit of integer counts against Poisson(mean). Tail bins are
// merged until every expected cell holds at least min_expected.
ChiSquaredResult chi_squared_poisson(std::span<const std::uint64_t> counts, double mean,
                                     double min_expected = 5.0);

struct LinearFit {
  double intercept;
  double slope;
  double slope_se;
};

LinearFit least_squares(std::span<const double> x, std::span<const double> y);

// Linear-interpolated empirical quantile of an unsorted sample, level in [0,1].
double quantile(std::vector<double> sample, double level);

}  // namespace levyshell
