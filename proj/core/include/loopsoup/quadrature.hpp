#pragma once

#include <functional>

namespace loopsoup {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  int evaluations = 0;
};

/// Globally adaptive 15-point Gauss-Kronrod integration on [a, b] to an
/// absolute error target. Throws NumericError when the subdivision budget
/// runs out before the target is met.
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double abs_tol, int max_intervals = 4000);

}  // namespace loopsoup
