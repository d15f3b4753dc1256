#include "tox2/numerics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "tox2/error.hpp"

namespace tox2 {

namespace {

constexpr double kLanczosG = 7.0;
constexpr std::array<double, 9> kLanczosCoef = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

const double kHalfLogTwoPi = 0.5 * std::log(2.0 * std::numbers::pi);

double lanczos_log_gamma(double x) {
  // valid for x >= 0.5
  x -= 1.0;
  double sum = kLanczosCoef[0];
  for (std::size_t i = 1; i < kLanczosCoef.size(); ++i) sum += kLanczosCoef[i] / (x + static_cast<double>(i));
  const double t = x + kLanczosG + 0.5;
  return kHalfLogTwoPi + (x + 0.5) * std::log(t) - t + std::log(sum);
}

constexpr double kCfTolerance = 1e-14;
constexpr int kCfMaxIterations = 300;
constexpr double kTiny = 1e-300;

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double incomplete_beta_cf(double x, double a, double b) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kCfMaxIterations; ++m) {
    const double dm = m;
    const double m2 = 2.0 * dm;
    double aa = dm * (b - dm) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + dm) * (qab + dm) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kCfTolerance) return h;
  }
  throw NumericalError(fmt::format("incomplete beta continued fraction did not converge (x={}, a={}, b={})", x, a, b));
}

// x^a (1-x)^b / (a B(a,b)) * cf, i.e. the lower tail when the fraction converges fast.
double lower_tail_by_cf(double x, double a, double b) {
  const double log_front = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
  return std::exp(log_front) * incomplete_beta_cf(x, a, b) / a;
}

void check_beta_args(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
    throw DomainError(fmt::format("beta parameters must be positive and finite (a={}, b={})", a, b));
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError(fmt::format("beta argument {} outside [0, 1]", x));
}

}  // namespace

double log_gamma(double x) {
  if (!(x > 0.0)) throw DomainError(fmt::format("log_gamma requires x > 0, got {}", x));
  if (std::isinf(x)) return x;
  if (x == 1.0 || x == 2.0) return 0.0;
  if (x < 0.5) {
    // reflection: Γ(x)Γ(1-x) = π / sin(πx)
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) - lanczos_log_gamma(1.0 - x);
  }
  return lanczos_log_gamma(x);
}

double log_beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0))
    throw DomainError(fmt::format("log_beta requires positive arguments (a={}, b={})", a, b));
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

double log_choose(int n, int k) {
  if (n < 0) throw DomainError(fmt::format("log_choose requires n >= 0, got {}", n));
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  if (k == 0 || k == n) return 0.0;
  return log_gamma(n + 1.0) - log_gamma(k + 1.0) - log_gamma(n - k + 1.0);
}

double beta_cdf(double x, double a, double b) {
  check_beta_args(x, a, b);
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  if (x <= a / (a + b)) return std::clamp(lower_tail_by_cf(x, a, b), 0.0, 1.0);
  return std::clamp(1.0 - lower_tail_by_cf(1.0 - x, b, a), 0.0, 1.0);
}

double beta_survival(double x, double a, double b) {
  check_beta_args(x, a, b);
  if (x == 0.0) return 1.0;
  if (x == 1.0) return 0.0;
  if (x <= a / (a + b)) return std::clamp(1.0 - lower_tail_by_cf(x, a, b), 0.0, 1.0);
  // upper tail of Be(a,b) at x is the lower tail of Be(b,a) at 1-x
  return std::clamp(lower_tail_by_cf(1.0 - x, b, a), 0.0, 1.0);
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw DomainError("log_sum_exp of an empty vector");
  const double top = *std::max_element(values.begin(), values.end());
  if (std::isinf(top)) return top;  // all -inf, or a +inf entry
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

double log_beta_binomial_pmf(int k, int n, double a, double b) {
  if (n < 0 || k < 0 || k > n)
    throw DomainError(fmt::format("beta-binomial pmf requires 0 <= k <= n (k={}, n={})", k, n));
  return log_choose(n, k) + log_beta(k + a, n - k + b) - log_beta(a, b);
}

std::vector<double> LogWeightVector::normalize() const {
  const double total = log_total();
  if (!std::isfinite(total)) throw DomainError("cannot normalize weights with no finite mass");
  std::vector<double> out;
  out.reserve(values_.size());
  for (double v : values_) out.push_back(std::exp(v - total));
  return out;
}

LogGammaTable::LogGammaTable(double offset, int size) : offset_(offset) {
  if (offset < 0.0 || size < 0) throw DomainError("LogGammaTable requires offset >= 0 and size >= 0");
  table_.reserve(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) {
    const double x = offset + i;
    table_.push_back(x > 0.0 ? log_gamma(x) : std::numeric_limits<double>::infinity());
  }
}

}  // namespace tox2
