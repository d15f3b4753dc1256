#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "tox2/bivariate_beta.hpp"
#include "tox2/numerics.hpp"

namespace tox2 {

enum class Cohort : int { one = 1, two = 2 };

inline Cohort other(Cohort c) noexcept { return c == Cohort::one ? Cohort::two : Cohort::one; }
inline int index_of(Cohort c) noexcept { return static_cast<int>(c) - 1; }
Cohort cohort_from_int(int c);

/// Enrolled and toxicity counts for both cohorts.
struct DataSummary {
  int n1 = 0;
  int k1 = 0;
  int n2 = 0;
  int k2 = 0;

  int n(Cohort c) const noexcept { return c == Cohort::one ? n1 : n2; }
  int k(Cohort c) const noexcept { return c == Cohort::one ? k1 : k2; }
  DataSummary swapped() const noexcept { return {n2, k2, n1, k1}; }
  void validate() const;

  friend bool operator==(const DataSummary&, const DataSummary&) = default;
};

struct BetaComponent {
  double weight;
  double a;
  double b;
};

/// Marginal posterior of one cohort's toxicity rate.
struct BetaMixture {
  std::vector<BetaComponent> components;

  double total_weight() const;
  double mean() const;
  double survival(double x) const;
  double density(double x) const;
};

struct JointComponent {
  double weight;
  AlphaVector alpha;         // prior + z
  std::array<int, 4> z;      // (z11, z10, z01, z00), sums to n1 + n2
};

/// Joint posterior as a mixture of bivariate betas indexed by (x1, x2, y1, y2).
struct JointBBetaMixture {
  std::vector<JointComponent> components;

  double total_weight() const;
  double density(double theta1, double theta2) const;
};

/// Components whose log-weight falls this far below the largest are dropped.
/// Each dropped weight is below e^-45 (about 3e-20).
inline constexpr double kLogWeightCutoff = 45.0;

JointBBetaMixture joint_posterior(const AlphaVector& prior, const DataSummary& d);

BetaMixture marginal_posterior(const AlphaVector& prior, const DataSummary& d, Cohort cohort);

/// P(theta_cohort > theta0 | data) under the bivariate beta prior.
double exceedance_correlated(const AlphaVector& prior, const DataSummary& d, double theta0, Cohort cohort);

/// Cohort-specific single-arm rule with the cohort's marginal prior.
double exceedance_independent(const AlphaVector& prior, int n, int k, double theta0, Cohort cohort);

/// Averaged prior Be((2a11+a10+a01)/2, (2a00+a01+a10)/2).
BetaParams pooled_prior(const AlphaVector& prior);

/// Single beta on the combined counts of both cohorts.
double exceedance_pooled(const AlphaVector& prior, const DataSummary& d, double theta0);

/// Marginal posteriors for a fixed prior with memoization keyed by
/// (n1, k1, n2, k2, cohort). Fills are idempotent and guarded, so one engine
/// may be shared across threads. Results are identical to marginal_posterior.
class MarginalPosteriorEngine {
 public:
  /// capacity bounds n1 + n2 for any query.
  MarginalPosteriorEngine(const AlphaVector& prior, int capacity);

  const AlphaVector& prior() const noexcept { return prior_; }
  int capacity() const noexcept { return capacity_; }

  std::shared_ptr<const BetaMixture> marginal(const DataSummary& d, Cohort cohort) const;
  double exceedance(const DataSummary& d, double theta0, Cohort cohort) const;

 private:
  BetaMixture compute(const DataSummary& d, Cohort cohort) const;
  std::shared_ptr<const std::vector<double>> inner_sums(int n_other, int k_other, Cohort cohort) const;

  AlphaVector prior_;
  int capacity_;
  LogGammaTable lg11_, lg10_, lg01_, lg00_, lg_row1_, lg_row0_, lg_col1_, lg_col0_;

  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::uint64_t, std::shared_ptr<const BetaMixture>> mixtures_;
  mutable std::unordered_map<std::uint64_t, std::shared_ptr<const std::vector<double>>> sums_;
};

}  // namespace tox2
