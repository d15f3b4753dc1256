#pragma once

#include <span>
#include <vector>

namespace tox2 {

/// ln Γ(x) for x > 0. Lanczos approximation (g = 7, nine terms) with the
/// reflection formula below 0.5.
double log_gamma(double x);

double log_beta(double a, double b);

/// ln C(n, k); -inf when k is outside 0..n.
double log_choose(int n, int k);

/// Regularized incomplete beta I_x(a, b).
double beta_cdf(double x, double a, double b);

/// P(T > x) for T ~ Beta(a, b).
double beta_survival(double x, double a, double b);

double log_sum_exp(std::span<const double> values);

/// ln[C(n,k) B(k+a, n-k+b) / B(a,b)].
double log_beta_binomial_pmf(int k, int n, double a, double b);

/// Unnormalized weights held on the natural-log scale. -inf is a legal entry
/// and means zero mass.
class LogWeightVector {
 public:
  LogWeightVector() = default;
  explicit LogWeightVector(std::vector<double> log_values) : values_(std::move(log_values)) {}

  void push_back(double log_value) { values_.push_back(log_value); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::span<const double> log_values() const noexcept { return values_; }

  double log_total() const { return log_sum_exp(values_); }

  /// Linear-scale weights summing to one.
  std::vector<double> normalize() const;

 private:
  std::vector<double> values_;
};

/// ln Γ(offset + i) for i = 0..size-1, built once for repeated integer shifts
/// of a fixed real offset. offset + 0 may be zero, in which case entry 0 is
/// +inf (callers treat it as a degenerate argument).
class LogGammaTable {
 public:
  LogGammaTable() = default;
  LogGammaTable(double offset, int size);

  double operator()(int i) const { return table_[static_cast<std::size_t>(i)]; }
  double offset() const noexcept { return offset_; }
  int size() const noexcept { return static_cast<int>(table_.size()); }

 private:
  double offset_ = 0.0;
  std::vector<double> table_;
};

}  // namespace tox2
