#pragma once

#include <functional>

namespace tox2 {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  int evaluations = 0;
};

/// Adaptive Gauss-Kronrod (7/15) integration over [lo, hi]. The rule is open:
/// the integrand is never evaluated at either endpoint. Intervals are bisected
/// until the Kronrod-Gauss difference falls below rel_tol * |total|.
QuadratureResult integrate_adaptive(const std::function<double(double)>& f, double lo, double hi,
                                    double rel_tol = 1e-10, int max_depth = 40);

}  // namespace tox2
