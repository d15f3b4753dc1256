#include "tox2/bivariate_beta.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "tox2/error.hpp"
#include "tox2/numerics.hpp"
#include "tox2/quadrature.hpp"

namespace tox2 {

namespace {

constexpr double kNegativeCellTolerance = 1e-12;

void check_probability_open(double p, const char* name) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError(fmt::format("{} must lie in (0, 1), got {}", name, p));
}

double log_multivariate_beta(const AlphaVector& a) {
  return log_gamma(a.a11) + log_gamma(a.a10) + log_gamma(a.a01) + log_gamma(a.a00) - log_gamma(a.ess());
}

// One linear factor of the u11 integrand: (offset + sign * t)^(alpha - 1).
struct Factor {
  double offset;
  double sign;
  double exponent;
};

// Integral over t in (0, width) of prod_j (offset_j + sign_j t)^exponent_j.
// Factors with offset exactly zero vanish at t = 0; their combined power is
// removed by t = s^(1/beta) so the transformed integrand is bounded there.
double integrate_from_vanishing_end(const std::array<Factor, 4>& factors, double width) {
  double singular = 0.0;
  for (const auto& f : factors)
    if (f.offset == 0.0) singular += f.exponent;
  const double beta = singular + 1.0;
  if (beta <= 0.0) return std::numeric_limits<double>::infinity();
  const auto integrand = [&](double s) {
    const double t = std::pow(s, 1.0 / beta);
    double log_val = 0.0;
    for (const auto& f : factors) {
      if (f.offset == 0.0) continue;
      const double base = f.offset + f.sign * t;
      if (base <= 0.0) return 0.0;
      log_val += f.exponent * std::log(base);
    }
    return std::exp(log_val) / beta;
  };
  return integrate_adaptive(integrand, 0.0, std::pow(width, beta), 1e-11).value;
}

}  // namespace

void AlphaVector::validate() const {
  for (double v : {a11, a10, a01, a00})
    if (!std::isfinite(v) || v < 0.0) throw DomainError(fmt::format("alpha cells must be finite and >= 0, got {}", v));
  if (!(ess() > 0.0)) throw DomainError("alpha cells must not all be zero");
}

RhoInterval feasible_rho_range(double p1, double p2) {
  check_probability_open(p1, "p1");
  check_probability_open(p2, "p2");
  const double q1 = 1.0 - p1;
  const double q2 = 1.0 - p2;
  const double lo = std::max(-1.0, -std::min(std::sqrt(p1 * p2 / (q1 * q2)), std::sqrt(q1 * q2 / (p1 * p2))));
  const double hi = std::min({1.0, std::sqrt(p1 * q2 / (p2 * q1)), std::sqrt(p2 * q1 / (p1 * q2))});
  return {lo, hi};
}

AlphaVector elicit(const PriorElicitation& e) {
  check_probability_open(e.p1, "p1");
  check_probability_open(e.p2, "p2");
  if (!(e.ess > 0.0) || !std::isfinite(e.ess)) throw DomainError(fmt::format("ESS must be positive, got {}", e.ess));
  if (!(e.rho >= -1.0 && e.rho <= 1.0)) throw DomainError(fmt::format("rho must lie in [-1, 1], got {}", e.rho));

  const double spread = std::sqrt(e.p1 * e.p2 * (1.0 - e.p1) * (1.0 - e.p2));
  AlphaVector a;
  a.a11 = (e.rho * spread + e.p1 * e.p2) * e.ess;
  a.a10 = e.p1 * e.ess - a.a11;
  a.a01 = e.p2 * e.ess - a.a11;
  a.a00 = e.ess - (a.a11 + a.a10 + a.a01);

  for (double* cell : {&a.a11, &a.a10, &a.a01, &a.a00}) {
    if (*cell < -kNegativeCellTolerance) {
      const auto range = feasible_rho_range(e.p1, e.p2);
      throw InfeasibleCorrelation(e.rho, range.lo, range.hi);
    }
    if (*cell < 0.0) *cell = 0.0;
  }
  return a;
}

PriorElicitation summarize(const AlphaVector& a) {
  a.validate();
  return {a.row1() / a.ess(), a.col1() / a.ess(), a.ess(), correlation(a)};
}

double correlation(const AlphaVector& a) {
  const double denom = a.row1() * a.col1() * a.row0() * a.col0();
  if (!(denom > 0.0)) throw DomainError("correlation requires all marginal sums to be positive");
  return (a.a11 * a.a00 - a.a10 * a.a01) / std::sqrt(denom);
}

std::pair<BetaParams, BetaParams> marginal_params(const AlphaVector& a) {
  if (!(a.row1() > 0 && a.row0() > 0 && a.col1() > 0 && a.col0() > 0))
    throw DomainError("marginal beta parameters require all marginal sums to be positive");
  return {BetaParams{a.row1(), a.row0()}, BetaParams{a.col1(), a.col0()}};
}

double joint_density(const AlphaVector& a, double x, double y) {
  if (!(x > 0.0 && x < 1.0) || !(y > 0.0 && y < 1.0))
    throw DomainError(fmt::format("joint density requires 0 < x, y < 1 (x={}, y={})", x, y));
  if (!a.all_positive())
    throw UnsupportedDegenerateDensity("joint density undefined when an alpha cell is zero");

  const double corner = x + y - 1.0;
  const double lo = std::max(0.0, corner);
  const double hi = std::min(x, y);
  if (!(hi > lo)) return 0.0;
  const double mid = 0.5 * (lo + hi);

  // Offsets are written relative to each end so that a factor vanishing
  // there has an exact zero offset.
  const std::array<Factor, 4> from_lo = {{
      {lo, 1.0, a.a11 - 1.0},
      {x - lo, -1.0, a.a10 - 1.0},
      {y - lo, -1.0, a.a01 - 1.0},
      {lo - corner, 1.0, a.a00 - 1.0},
  }};
  const std::array<Factor, 4> from_hi = {{
      {hi, -1.0, a.a11 - 1.0},
      {x - hi, 1.0, a.a10 - 1.0},
      {y - hi, 1.0, a.a01 - 1.0},
      {hi - corner, -1.0, a.a00 - 1.0},
  }};
  const double total =
      integrate_from_vanishing_end(from_lo, mid - lo) + integrate_from_vanishing_end(from_hi, hi - mid);
  return std::exp(std::log(total) - log_multivariate_beta(a));
}

std::vector<Point2> sample_prior(const AlphaVector& a, std::size_t count, std::uint64_t seed) {
  a.validate();
  int positive = 0;
  for (double v : {a.a11, a.a10, a.a01, a.a00}) positive += v > 0.0;
  if (positive < 2) throw DomainError("sampling requires at least two positive alpha cells");

  std::mt19937_64 rng(seed);
  auto draw = [&rng](double shape) {
    if (shape <= 0.0) return 0.0;
    return std::gamma_distribution<double>(shape, 1.0)(rng);
  };
  std::vector<Point2> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double g11 = draw(a.a11);
    const double g10 = draw(a.a10);
    const double g01 = draw(a.a01);
    const double g00 = draw(a.a00);
    const double total = g11 + g10 + g01 + g00;
    if (!(total > 0.0)) {
      --i;  // every gamma underflowed; redraw
      continue;
    }
    out.push_back({(g11 + g10) / total, (g11 + g01) / total});
  }
  return out;
}

}  // namespace tox2
