#pragma once

#include <functional>

namespace levyshell {

struct QuadratureResult {
  double value;
  double error_estimate;
};

// Adaptive Gauss-Kronrod on a finite interval.
QuadratureResult integrate_interval(const std::function<double(double)>& f, double a, double b,
                                    double rel_tol = 1e-12);

// Fixed 7-point Gauss-Legendre rule; used for the many narrow cells of the
// sampler tables where adaptivity is wasted.
double gauss_legendre7(const std::function<double(double)>& f, double a, double b);

}  // namespace levyshell
