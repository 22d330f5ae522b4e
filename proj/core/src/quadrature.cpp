#include "levyshell/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace levyshell {

QuadratureResult integrate_interval(const std::function<double(double)>& f, double a, double b,
                                    double rel_tol) {
  if (a == b) return {0.0, 0.0};
  // Boost's error test stalls on short intervals, so integrate over [0, 1].
  const double w = b - a;
  auto g = [&](double t) { return w * f(a + w * t); };
  double err = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, 0.0, 1.0, 20, rel_tol, &err);
  return {value, err};
}

double gauss_legendre7(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss<double, 7>::integrate(f, a, b);
}

}  // namespace levyshell
