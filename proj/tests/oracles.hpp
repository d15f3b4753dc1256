#pragma once

// Reference computations that share no code with the library: Boost special
// functions, full expansion of the latent cells, and quadrature over a
// stick-breaking Dirichlet.

#include <cmath>
#include <map>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/binomial.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace oracle {

struct Alpha {
  double a11, a10, a01, a00;
};

struct Data {
  int n1, k1, n2, k2;
};

inline double lbeta4(double a, double b, double c, double d) {
  using boost::math::lgamma;
  return lgamma(a) + lgamma(b) + lgamma(c) + lgamma(d) - lgamma(a + b + c + d);
}

inline double lchoose(int n, int k) {
  using boost::math::lgamma;
  return lgamma(n + 1.0) - lgamma(k + 1.0) - lgamma(n - k + 1.0);
}

/// Full expansion of the likelihood over the four latent cells, collapsed to
/// cohort 1's marginal. Keyed by the count added to a11 + a10 in the
/// component's first beta parameter; values are normalized weights.
inline std::map<int, double> cohort1_weights_by_expansion(const Alpha& a, const Data& d) {
  std::map<int, double> out;
  std::vector<std::pair<double, int>> terms;  // (log weight, key)
  double top = -INFINITY;
  for (int x1 = 0; x1 <= d.k1; ++x1)
    for (int x2 = 0; x2 <= d.n1 - d.k1; ++x2)
      for (int y1 = 0; y1 <= d.k2; ++y1)
        for (int y2 = 0; y2 <= d.n2 - d.k2; ++y2) {
          const int z11 = x1 + y1;
          const int z10 = d.k1 - x1 + y2;
          const int z01 = x2 + d.k2 - y1;
          const int z00 = d.n1 - d.k1 - x2 + d.n2 - d.k2 - y2;
          const double lw = lchoose(d.k1, x1) + lchoose(d.n1 - d.k1, x2) + lchoose(d.k2, y1) +
                            lchoose(d.n2 - d.k2, y2) + lbeta4(a.a11 + z11, a.a10 + z10, a.a01 + z01, a.a00 + z00);
          terms.emplace_back(lw, z11 + z10);
          top = std::max(top, lw);
        }
  double total = 0.0;
  for (const auto& [lw, _] : terms) total += std::exp(lw - top);
  for (const auto& [lw, key] : terms) out[key] += std::exp(lw - top) / total;
  return out;
}

/// P(theta1 > theta0 | data) and E[theta1 | data] by 2-D tanh-sinh
/// quadrature. The Dirichlet is written as independent stick-breaking betas
/// s1 ~ Be(a11, a10+a01+a00), s2 ~ Be(a10, a01+a00), s3 ~ Be(a01, a00), so
/// theta1 = s1 + (1-s1)s2 and theta2 = s1 + (1-s1)(1-s2)s3. The cohort-2
/// likelihood is a polynomial in s3, so the s3 integral is taken exactly from
/// beta moments; s1 and s2 are integrated numerically.
struct Posterior1 {
  double exceedance;
  double mean;
};

inline Posterior1 cohort1_by_quadrature(const Alpha& a, const Data& d, double theta0, double tol = 1e-9) {
  boost::math::quadrature::tanh_sinh<double> ts;
  const double b1 = a.a10 + a.a01 + a.a00;
  const double b2 = a.a01 + a.a00;
  std::vector<double> moment(static_cast<std::size_t>(d.n2) + 1, 1.0);  // E[s3^j]
  for (std::size_t j = 1; j < moment.size(); ++j)
    moment[j] = moment[j - 1] * (a.a01 + static_cast<double>(j) - 1) / (a.a01 + a.a00 + static_cast<double>(j) - 1);

  // E over s3 of y^k2 (1-y)^(n2-k2) with y = lo + span * s3.
  const auto inner = [&](double s1, double s2) {
    const double lo = s1;
    const double span = (1 - s1) * (1 - s2);
    std::vector<double> poly{1.0};
    const auto mul = [&poly](double c0, double c1) {
      std::vector<double> next(poly.size() + 1, 0.0);
      for (std::size_t i = 0; i < poly.size(); ++i) {
        next[i] += poly[i] * c0;
        next[i + 1] += poly[i] * c1;
      }
      poly = std::move(next);
    };
    for (int i = 0; i < d.k2; ++i) mul(lo, span);
    for (int i = 0; i < d.n2 - d.k2; ++i) mul(1 - lo, -span);
    double e = 0.0;
    for (std::size_t j = 0; j < poly.size(); ++j) e += poly[j] * moment[j];
    return e;
  };
  // Be(p, q) expectation of h over [from, to], with s = t^(1/p) removing the
  // s^(p-1) singularity at zero.
  const auto beta_part = [&](double p, double q, double from, double to, double tolerance, auto&& h) {
    if (from >= to) return 0.0;
    const double norm = 1.0 / (p * boost::math::beta(p, q));
    const auto f = [&](double t) {
      const double s = std::pow(t, 1.0 / p);
      return std::pow(1.0 - s, q - 1.0) * h(s);
    };
    return norm * ts.integrate(f, std::pow(from, p), std::pow(to, p), tolerance);
  };
  const auto middle = [&](double s1, double from, bool times_x) {
    return beta_part(a.a10, b2, from, 1.0, tol * 1e-2, [&](double s2) {
      const double x = s1 + (1 - s1) * s2;
      return (times_x ? x : 1.0) * std::pow(x, d.k1) * std::pow(1 - x, d.n1 - d.k1) * inner(s1, s2);
    });
  };
  // Split at theta0, where the exceedance cut on s2 reaches zero.
  const auto outer = [&](auto&& g) {
    return beta_part(a.a11, b1, 0.0, theta0, tol, g) + beta_part(a.a11, b1, theta0, 1.0, tol, g);
  };
  const double z = outer([&](double s1) { return middle(s1, 0.0, false); });
  const double num = outer([&](double s1) {
    // theta1 > theta0 holds for s2 above this cut.
    const double cut = s1 >= theta0 ? 0.0 : (theta0 - s1) / (1 - s1);
    return middle(s1, cut, false);
  });
  const double mx = outer([&](double s1) { return middle(s1, 0.0, true); });
  return {num / z, mx / z};
}

inline double beta_survival(double x, double a, double b) { return boost::math::ibetac(a, b, x); }

}  // namespace oracle
