#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace tox2 {

/// Dirichlet cell counts of the bivariate beta prior. a11 counts imaginary
/// subjects with toxicity in either cohort, a10 only in cohort 1, a01 only in
/// cohort 2 and a00 in neither.
struct AlphaVector {
  double a11 = 0.0;
  double a10 = 0.0;
  double a01 = 0.0;
  double a00 = 0.0;

  double ess() const noexcept { return a11 + a10 + a01 + a00; }
  double row1() const noexcept { return a11 + a10; }  // α1+
  double row0() const noexcept { return a01 + a00; }  // α0+
  double col1() const noexcept { return a11 + a01; }  // α+1
  double col0() const noexcept { return a10 + a00; }  // α+0

  /// Cohort relabeling: exchanges a10 and a01.
  AlphaVector swapped() const noexcept { return {a11, a01, a10, a00}; }
  bool all_positive() const noexcept { return a11 > 0 && a10 > 0 && a01 > 0 && a00 > 0; }

  /// Throws DomainError unless every cell is finite, nonnegative, and the sum is positive.
  void validate() const;

  friend bool operator==(const AlphaVector&, const AlphaVector&) = default;
};

/// Interpretable prior summaries: marginal means, effective sample size and correlation.
struct PriorElicitation {
  double p1 = 0.2;
  double p2 = 0.2;
  double ess = 3.0;
  double rho = 0.0;

  friend bool operator==(const PriorElicitation&, const PriorElicitation&) = default;
};

struct RhoInterval {
  double lo;
  double hi;
  bool contains(double rho) const noexcept { return rho >= lo && rho <= hi; }
};

struct BetaParams {
  double a;
  double b;
  double mean() const noexcept { return a / (a + b); }
};

struct Point2 {
  double x;
  double y;
};

/// Solves the mean/ESS/correlation system for the four cells. Throws
/// InfeasibleCorrelation (carrying the feasible interval) when a cell would be
/// negative beyond -1e-12; tiny negatives are clamped to zero.
AlphaVector elicit(const PriorElicitation& e);

/// Reads (p1, p2, ESS, rho) back off an alpha vector.
PriorElicitation summarize(const AlphaVector& a);

RhoInterval feasible_rho_range(double p1, double p2);

double correlation(const AlphaVector& a);

/// Marginals X ~ Be(α1+, α0+) and Y ~ Be(α+1, α+0).
std::pair<BetaParams, BetaParams> marginal_params(const AlphaVector& a);

/// Joint density of (X, Y) by one-dimensional quadrature over the latent
/// u11 cell. Oracle use only.
double joint_density(const AlphaVector& a, double x, double y);

/// Draws (X, Y) pairs through four gamma variates normalised to a Dirichlet.
std::vector<Point2> sample_prior(const AlphaVector& a, std::size_t count, std::uint64_t seed);

}  // namespace tox2
