#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tox2/error.hpp"
#include "tox2/posterior.hpp"

using namespace tox2;

namespace {

const AlphaVector kPrior{0.36, 0.24, 0.24, 2.16};

oracle::Alpha to_oracle(const AlphaVector& a) { return {a.a11, a.a10, a.a01, a.a00}; }
oracle::Data to_oracle(const DataSummary& d) { return {d.n1, d.k1, d.n2, d.k2}; }

DataSummary random_counts(std::mt19937_64& rng, int max_n) {
  std::uniform_int_distribution<int> n(0, max_n);
  DataSummary d;
  d.n1 = n(rng);
  d.n2 = n(rng);
  d.k1 = std::uniform_int_distribution<int>(0, d.n1)(rng);
  d.k2 = std::uniform_int_distribution<int>(0, d.n2)(rng);
  return d;
}

AlphaVector random_prior(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double p1 = 0.05 + 0.5 * u(rng);
  const double p2 = 0.05 + 0.5 * u(rng);
  const auto r = feasible_rho_range(p1, p2);
  // Stay inside the interval so every cell is positive.
  const double rho = r.lo + (r.hi - r.lo) * (0.02 + 0.96 * u(rng));
  return elicit({p1, p2, 0.5 + 9.5 * u(rng), rho});
}

}  // namespace

TEST_CASE("joint posterior without data is the prior") {
  const auto j = joint_posterior(kPrior, {0, 0, 0, 0});
  REQUIRE(j.components.size() == 1);
  CHECK(j.components[0].weight == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(j.components[0].alpha == kPrior);
}

TEST_CASE("mixture weights are normalized") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto d = random_counts(rng, 15);
    const auto a = random_prior(rng);
    CHECK(std::abs(joint_posterior(a, d).total_weight() - 1.0) < 1e-10);
    CHECK(std::abs(marginal_posterior(a, d, Cohort::one).total_weight() - 1.0) < 1e-10);
    CHECK(std::abs(marginal_posterior(a, d, Cohort::two).total_weight() - 1.0) < 1e-10);
    for (const auto& c : marginal_posterior(a, d, Cohort::one).components) CHECK(c.weight >= 0.0);
  }
}

TEST_CASE("no cohort-2 data reduces to the independent posterior") {
  for (int n1 = 0; n1 <= 12; ++n1)
    for (int k1 = 0; k1 <= n1; ++k1) {
      const auto m = marginal_posterior(kPrior, {n1, k1, 0, 0}, Cohort::one);
      REQUIRE(m.components.size() == 1);
      CHECK(std::abs(m.components[0].a - (0.6 + k1)) < 1e-12);
      CHECK(std::abs(m.components[0].b - (2.4 + n1 - k1)) < 1e-12);
      CHECK(std::abs(exceedance_correlated(kPrior, {n1, k1, 0, 0}, 0.2, Cohort::one) -
                     exceedance_independent(kPrior, n1, k1, 0.2, Cohort::one)) < 1e-14);
    }
}

TEST_CASE("marginal weights equal the collapsed full expansion") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 40; ++i) {
    const auto d = random_counts(rng, 8);
    const auto a = random_prior(rng);
    const auto ref = oracle::cohort1_weights_by_expansion(to_oracle(a), to_oracle(d));
    std::map<int, double> got;
    for (const auto& c : marginal_posterior(a, d, Cohort::one).components)
      got[static_cast<int>(std::lround(c.a - a.row1()))] += c.weight;
    for (const auto& [key, w] : ref) {
      CAPTURE(key);
      // Components below the library's pruning cutoff are absent and count as zero.
      CHECK(std::abs(got[key] - w) < 1e-10);
    }
  }
}

TEST_CASE("joint mixture collapses to the marginal mixture") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 30; ++i) {
    const auto d = random_counts(rng, 8);
    const auto a = random_prior(rng);
    const auto j = joint_posterior(a, d);
    std::map<long, double> collapsed;
    for (const auto& c : j.components) collapsed[std::lround(1e6 * c.alpha.row1())] += c.weight;
    const auto m = marginal_posterior(a, d, Cohort::one);
    for (const auto& c : m.components) CHECK(std::abs(collapsed[std::lround(1e6 * c.a)] - c.weight) < 1e-10);
  }
}

TEST_CASE("cohort swap symmetry") {
  std::mt19937_64 rng(29);
  for (int i = 0; i < 60; ++i) {
    const auto d = random_counts(rng, 12);
    const auto a = random_prior(rng);
    for (double t0 : {0.1, 0.2, 0.35}) {
      CHECK(std::abs(exceedance_correlated(a, d, t0, Cohort::two) -
                     exceedance_correlated(a.swapped(), d.swapped(), t0, Cohort::one)) < 1e-13);
    }
    CHECK(std::abs(marginal_posterior(a, d, Cohort::two).mean() -
                   marginal_posterior(a.swapped(), d.swapped(), Cohort::one).mean()) < 1e-13);
  }
}

TEST_CASE("exceedance and posterior mean agree with quadrature of the joint kernel") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 8; ++i) {
    const auto d = random_counts(rng, 8);
    const auto a = random_prior(rng);
    const double t0 = std::uniform_real_distribution<double>(0.1, 0.4)(rng);
    const auto ref = oracle::cohort1_by_quadrature(to_oracle(a), to_oracle(d), t0);
    CAPTURE(d.n1);
    CAPTURE(d.k1);
    CAPTURE(d.n2);
    CAPTURE(d.k2);
    CHECK(std::abs(exceedance_correlated(a, d, t0, Cohort::one) - ref.exceedance) < 1e-6);
    CHECK(std::abs(marginal_posterior(a, d, Cohort::one).mean() - ref.mean) < 1e-6);
  }
}

TEST_CASE("exceedance examples") {
  CHECK(exceedance_correlated(kPrior, {3, 3, 0, 0}, 0.2, Cohort::one) >= 0.98);
  CHECK(exceedance_correlated(kPrior, {6, 4, 6, 0}, 0.2, Cohort::one) < 0.98);
  CHECK(exceedance_correlated(kPrior, {6, 5, 6, 0}, 0.2, Cohort::one) >= 0.98);
  CHECK(exceedance_correlated(kPrior, {4, 2, 3, 1}, 1e-9, Cohort::one) > 1 - 1e-6);
  CHECK(exceedance_correlated(kPrior, {4, 2, 3, 1}, 1 - 1e-9, Cohort::one) < 1e-6);

  CHECK(exceedance_independent(kPrior, 3, 3, 0.2, Cohort::one) >= 0.98);
  CHECK(exceedance_independent(kPrior, 4, 4, 0.2, Cohort::one) >= 0.98);
  CHECK(exceedance_independent(kPrior, 5, 4, 0.2, Cohort::one) >= 0.98);
  CHECK(exceedance_independent(kPrior, 3, 2, 0.2, Cohort::one) < 0.98);
  CHECK(exceedance_independent(kPrior, 4, 3, 0.2, Cohort::one) < 0.98);
}

TEST_CASE("independent rule uses each cohort's own marginal") {
  const AlphaVector a{1, 2, 3, 4};
  CHECK(std::abs(exceedance_independent(a, 5, 2, 0.3, Cohort::one) - oracle::beta_survival(0.3, 3 + 2, 7 + 3)) < 1e-13);
  CHECK(std::abs(exceedance_independent(a, 5, 2, 0.3, Cohort::two) - oracle::beta_survival(0.3, 4 + 2, 6 + 3)) < 1e-13);
}

TEST_CASE("pooled rule averages the two marginal priors") {
  const auto p = pooled_prior(kPrior);
  CHECK(std::abs(p.a - 0.6) < 1e-12);
  CHECK(std::abs(p.b - 2.4) < 1e-12);
  const auto q = pooled_prior({1, 2, 3, 4});
  CHECK(std::abs(q.a - 3.5) < 1e-12);
  CHECK(std::abs(q.b - 6.5) < 1e-12);
  CHECK(std::abs(exceedance_pooled(kPrior, {6, 5, 6, 0}, 0.2) - oracle::beta_survival(0.2, 5.6, 9.4)) < 1e-13);
  // Under the averaged-prior formula (6,6,6,0) pools to 6 of 12, which does not cross 0.98.
  CHECK(exceedance_pooled(kPrior, {6, 6, 6, 0}, 0.2) < 0.98);
}

TEST_CASE("exceedance is strictly increasing in the cohort's own count") {
  const AlphaVector a = elicit({0.2, 0.2, 3, 0.5});
  for (int n1 = 1; n1 <= 20; ++n1)
    for (int n2 = 0; n2 <= 20; ++n2)
      for (int k2 = 0; k2 <= n2; ++k2)
        for (int k1 = 0; k1 < n1; ++k1) {
          CAPTURE(n1);
          CAPTURE(k1);
          CAPTURE(n2);
          CAPTURE(k2);
          CHECK(exceedance_correlated(a, {n1, k1 + 1, n2, k2}, 0.2, Cohort::one) >
                exceedance_correlated(a, {n1, k1, n2, k2}, 0.2, Cohort::one));
        }
}

TEST_CASE("exceedance is not monotone in the other cohort's count") {
  // With no cohort-1 events, one more cohort-2 event lowers the exceedance even
  // though the posterior mean rises. The quadrature oracle shares no code with
  // the mixture, so this is a property of the model and not round-off.
  const AlphaVector a = elicit({0.2, 0.2, 3, 0.5});
  const DataSummary before{3, 0, 3, 2};
  const DataSummary after{3, 0, 3, 3};
  const auto ref_before = oracle::cohort1_by_quadrature(to_oracle(a), to_oracle(before), 0.2);
  const auto ref_after = oracle::cohort1_by_quadrature(to_oracle(a), to_oracle(after), 0.2);
  CHECK(ref_after.exceedance < ref_before.exceedance - 0.01);
  CHECK(ref_after.mean > ref_before.mean);
  CHECK(std::abs(exceedance_correlated(a, before, 0.2, Cohort::one) - ref_before.exceedance) < 1e-6);
  CHECK(std::abs(exceedance_correlated(a, after, 0.2, Cohort::one) - ref_after.exceedance) < 1e-6);
}

TEST_CASE("pooled exceedance is strictly increasing in the combined count") {
  const AlphaVector a = elicit({0.2, 0.2, 3, 0.5});
  for (int n = 1; n <= 20; ++n)
    for (int k = 0; k < 2 * n; ++k) {
      const DataSummary lo{n, std::min(k, n), n, k - std::min(k, n)};
      const DataSummary hi{n, std::min(k + 1, n), n, k + 1 - std::min(k + 1, n)};
      const double e_lo = exceedance_pooled(a, lo, 0.2);
      const double e_hi = exceedance_pooled(a, hi, 0.2);
      // Strictness is only observable until the value rounds to 1.
      if (e_lo < 1.0) CHECK(e_hi > e_lo);
      CHECK(e_hi >= e_lo);
    }
}

TEST_CASE("engine reproduces the direct computation") {
  const AlphaVector a = elicit({0.25, 0.15, 4, 0.3});
  MarginalPosteriorEngine engine(a, 40);
  std::mt19937_64 rng(37);
  for (int i = 0; i < 200; ++i) {
    const auto d = random_counts(rng, 20);
    for (Cohort c : {Cohort::one, Cohort::two}) {
      const double direct = exceedance_correlated(a, d, 0.2, c);
      CHECK(std::abs(engine.exceedance(d, 0.2, c) - direct) < 1e-13);
    }
  }
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS(marginal_posterior(kPrior, {3, 4, 0, 0}, Cohort::one), DomainError);
  CHECK_THROWS_AS(exceedance_correlated(kPrior, {3, 1, 0, 0}, 1.5, Cohort::one), DomainError);
  CHECK_THROWS_AS(exceedance_independent(kPrior, 2, 3, 0.2, Cohort::one), DomainError);
  CHECK_THROWS_AS(joint_posterior({0, 1, 1, 1}, {2, 1, 0, 0}), DegeneratePrior);
}
