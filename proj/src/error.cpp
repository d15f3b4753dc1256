#include "tox2/error.hpp"

#include <fmt/format.h>

namespace tox2 {

InfeasibleCorrelation::InfeasibleCorrelation(double rho, double lo, double hi)
    : Error(fmt::format("correlation {} is infeasible for these prior means; feasible interval is [{}, {}]",
                        rho, lo, hi)),
      rho_(rho),
      lo_(lo),
      hi_(hi) {}

InfeasibleCalibration::InfeasibleCalibration(double target, double tau_max, double alpha_at_max)
    : Error(fmt::format("no tau on the grid reaches type I error {}; at tau = {} the error is {}", target,
                        tau_max, alpha_at_max)),
      tau_max_(tau_max),
      alpha_at_max_(alpha_at_max) {}

}  // namespace tox2
