#include "tox2/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "tox2/error.hpp"

namespace tox2 {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_theta0(double theta0) {
  if (!(theta0 >= 0.0 && theta0 <= 1.0)) throw DomainError(fmt::format("threshold {} outside [0, 1]", theta0));
}

std::uint64_t pack_key(int a, int b, int c, int d, int e) {
  // 12 bits per count is ample under the engine's capacity checks
  return (static_cast<std::uint64_t>(a) << 52) | (static_cast<std::uint64_t>(b) << 40) |
         (static_cast<std::uint64_t>(c) << 28) | (static_cast<std::uint64_t>(d) << 16) |
         static_cast<std::uint64_t>(e);
}

double checked(double log_gamma_value) {
  if (!std::isfinite(log_gamma_value))
    throw DegeneratePrior("a gamma-function argument in the posterior weights is not positive");
  return log_gamma_value;
}

// Tables arranged so that the cohort-1 formula serves both cohorts.
struct Orientation {
  const LogGammaTable& own_in;     // α11 + i
  const LogGammaTable& own_only;   // α10 (cohort 1) / α01 (cohort 2)
  const LogGammaTable& other_only; // α01 / α10
  const LogGammaTable& neither;    // α00
  const LogGammaTable& own_row1;   // α1+ / α+1
  const LogGammaTable& own_row0;   // α0+ / α+0
};

}  // namespace

Cohort cohort_from_int(int c) {
  if (c == 1) return Cohort::one;
  if (c == 2) return Cohort::two;
  throw DomainError(fmt::format("cohort must be 1 or 2, got {}", c));
}

void DataSummary::validate() const {
  if (n1 < 0 || n2 < 0 || k1 < 0 || k2 < 0)
    throw DomainError(fmt::format("counts must be nonnegative (n1={}, k1={}, n2={}, k2={})", n1, k1, n2, k2));
  if (k1 > n1 || k2 > n2)
    throw DomainError(fmt::format("toxicities exceed enrollment (n1={}, k1={}, n2={}, k2={})", n1, k1, n2, k2));
}

double BetaMixture::total_weight() const {
  double s = 0.0;
  for (const auto& c : components) s += c.weight;
  return s;
}

double BetaMixture::mean() const {
  double m = 0.0;
  for (const auto& c : components) m += c.weight * c.a / (c.a + c.b);
  return m;
}

double BetaMixture::survival(double x) const {
  double s = 0.0;
  for (const auto& c : components) s += c.weight * beta_survival(x, c.a, c.b);
  return std::clamp(s, 0.0, 1.0);
}

double BetaMixture::density(double x) const {
  if (!(x > 0.0 && x < 1.0)) throw DomainError("mixture density requires 0 < x < 1");
  double f = 0.0;
  for (const auto& c : components)
    f += c.weight * std::exp((c.a - 1.0) * std::log(x) + (c.b - 1.0) * std::log1p(-x) - log_beta(c.a, c.b));
  return f;
}

double JointBBetaMixture::total_weight() const {
  double s = 0.0;
  for (const auto& c : components) s += c.weight;
  return s;
}

double JointBBetaMixture::density(double theta1, double theta2) const {
  double f = 0.0;
  for (const auto& c : components) f += c.weight * joint_density(c.alpha, theta1, theta2);
  return f;
}

JointBBetaMixture joint_posterior(const AlphaVector& prior, const DataSummary& d) {
  prior.validate();
  d.validate();
  const int tox1 = d.k1, non1 = d.n1 - d.k1, tox2 = d.k2, non2 = d.n2 - d.k2;

  std::vector<JointComponent> comps;
  LogWeightVector logw;
  for (int x1 = 0; x1 <= tox1; ++x1)
    for (int x2 = 0; x2 <= non1; ++x2)
      for (int y1 = 0; y1 <= tox2; ++y1)
        for (int y2 = 0; y2 <= non2; ++y2) {
          const std::array<int, 4> z = {x1 + y1, tox1 - x1 + y2, x2 + tox2 - y1, non1 - x2 + non2 - y2};
          const AlphaVector post{prior.a11 + z[0], prior.a10 + z[1], prior.a01 + z[2], prior.a00 + z[3]};
          if (!post.all_positive())
            throw DegeneratePrior("a joint posterior component has a zero Dirichlet cell");
          const double log_b = log_gamma(post.a11) + log_gamma(post.a10) + log_gamma(post.a01) +
                               log_gamma(post.a00) - log_gamma(post.ess());
          logw.push_back(log_choose(tox1, x1) + log_choose(non1, x2) + log_choose(tox2, y1) +
                         log_choose(non2, y2) + log_b);
          comps.push_back({0.0, post, z});
        }

  const auto w = logw.normalize();
  const double top = *std::max_element(logw.log_values().begin(), logw.log_values().end());
  JointBBetaMixture out;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    if (logw.log_values()[i] < top - kLogWeightCutoff) continue;
    comps[i].weight = w[i];
    out.components.push_back(comps[i]);
  }
  return out;
}

MarginalPosteriorEngine::MarginalPosteriorEngine(const AlphaVector& prior, int capacity)
    : prior_(prior), capacity_(capacity) {
  prior_.validate();
  if (capacity < 0 || capacity > 4000) throw ResourceLimit(fmt::format("posterior capacity {} out of range", capacity));
  const int size = capacity + 2;
  lg11_ = LogGammaTable(prior.a11, size);
  lg10_ = LogGammaTable(prior.a10, size);
  lg01_ = LogGammaTable(prior.a01, size);
  lg00_ = LogGammaTable(prior.a00, size);
  lg_row1_ = LogGammaTable(prior.row1(), size);
  lg_row0_ = LogGammaTable(prior.row0(), size);
  lg_col1_ = LogGammaTable(prior.col1(), size);
  lg_col0_ = LogGammaTable(prior.col0(), size);
}

// S(y) = log Σ_{y2} C(k_o, y-y2) C(n_o-k_o, y2) B(α00+y2, α_oo+y-y2) B(α_own+n_o-k_o-y2, α11+k_o-y+y2)
// where "o" is the other cohort and α_oo its exclusive cell.
std::shared_ptr<const std::vector<double>> MarginalPosteriorEngine::inner_sums(int n_other, int k_other,
                                                                                Cohort cohort) const {
  const std::uint64_t key = pack_key(n_other, k_other, 0, 0, static_cast<int>(cohort));
  {
    std::shared_lock lock(mutex_);
    if (auto it = sums_.find(key); it != sums_.end()) return it->second;
  }
  const bool first = cohort == Cohort::one;
  const Orientation o{lg11_, first ? lg10_ : lg01_, first ? lg01_ : lg10_, lg00_,
                      first ? lg_row1_ : lg_col1_, first ? lg_row0_ : lg_col0_};
  const int non_other = n_other - k_other;
  auto sums = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n_other + 1), kNegInf);
  std::vector<double> terms;
  for (int y = 0; y <= n_other; ++y) {
    terms.clear();
    const int lo = std::max(0, y - k_other);
    const int hi = std::min(non_other, y);
    for (int y2 = lo; y2 <= hi; ++y2) {
      const double beta_neither = checked(o.neither(y2)) + checked(o.other_only(y - y2)) - checked(o.own_row0(y));
      const double beta_own = checked(o.own_only(non_other - y2)) + checked(o.own_in(k_other - y + y2)) -
                              checked(o.own_row1(n_other - y));
      terms.push_back(log_choose(k_other, y - y2) + log_choose(non_other, y2) + beta_neither + beta_own);
    }
    (*sums)[static_cast<std::size_t>(y)] = log_sum_exp(terms);
  }
  std::unique_lock lock(mutex_);
  return sums_.try_emplace(key, std::move(sums)).first->second;
}

BetaMixture MarginalPosteriorEngine::compute(const DataSummary& d, Cohort cohort) const {
  d.validate();
  if (d.n1 + d.n2 > capacity_)
    throw ResourceLimit(fmt::format("n1 + n2 = {} exceeds engine capacity {}", d.n1 + d.n2, capacity_));
  const bool first = cohort == Cohort::one;
  const int n_own = d.n(cohort), k_own = d.k(cohort);
  const int n_oth = d.n(other(cohort)), k_oth = d.k(other(cohort));
  const LogGammaTable& row1 = first ? lg_row1_ : lg_col1_;
  const LogGammaTable& row0 = first ? lg_row0_ : lg_col0_;
  const double a_base = first ? prior_.row1() : prior_.col1();
  const double b_base = first ? prior_.row0() : prior_.col0();

  const auto sums = inner_sums(n_oth, k_oth, cohort);
  std::vector<double> logw(static_cast<std::size_t>(n_oth + 1));
  for (int y = 0; y <= n_oth; ++y)
    logw[static_cast<std::size_t>(y)] =
        checked(row1(k_own + n_oth - y)) + checked(row0(n_own - k_own + y)) + (*sums)[static_cast<std::size_t>(y)];

  const double total = log_sum_exp(logw);
  const double top = *std::max_element(logw.begin(), logw.end());
  BetaMixture out;
  out.components.reserve(logw.size());
  for (int y = 0; y <= n_oth; ++y) {
    const double lw = logw[static_cast<std::size_t>(y)];
    if (lw < top - kLogWeightCutoff) continue;
    out.components.push_back({std::exp(lw - total), a_base + k_own + n_oth - y, b_base + n_own - k_own + y});
  }
  return out;
}

std::shared_ptr<const BetaMixture> MarginalPosteriorEngine::marginal(const DataSummary& d, Cohort cohort) const {
  d.validate();
  const std::uint64_t key = pack_key(d.n1, d.k1, d.n2, d.k2, static_cast<int>(cohort));
  {
    std::shared_lock lock(mutex_);
    if (auto it = mixtures_.find(key); it != mixtures_.end()) return it->second;
  }
  auto mix = std::make_shared<const BetaMixture>(compute(d, cohort));
  std::unique_lock lock(mutex_);
  return mixtures_.try_emplace(key, std::move(mix)).first->second;
}

double MarginalPosteriorEngine::exceedance(const DataSummary& d, double theta0, Cohort cohort) const {
  check_theta0(theta0);
  return marginal(d, cohort)->survival(theta0);
}

BetaMixture marginal_posterior(const AlphaVector& prior, const DataSummary& d, Cohort cohort) {
  d.validate();
  const MarginalPosteriorEngine engine(prior, d.n1 + d.n2);
  return *engine.marginal(d, cohort);
}

double exceedance_correlated(const AlphaVector& prior, const DataSummary& d, double theta0, Cohort cohort) {
  check_theta0(theta0);
  return marginal_posterior(prior, d, cohort).survival(theta0);
}

double exceedance_independent(const AlphaVector& prior, int n, int k, double theta0, Cohort cohort) {
  check_theta0(theta0);
  if (n < 0 || k < 0 || k > n) throw DomainError(fmt::format("need 0 <= k <= n (n={}, k={})", n, k));
  const auto [first, second] = marginal_params(prior);
  const BetaParams& m = cohort == Cohort::one ? first : second;
  return beta_survival(theta0, m.a + k, m.b + n - k);
}

BetaParams pooled_prior(const AlphaVector& prior) {
  prior.validate();
  const BetaParams p{(2.0 * prior.a11 + prior.a10 + prior.a01) / 2.0, (2.0 * prior.a00 + prior.a01 + prior.a10) / 2.0};
  if (!(p.a > 0.0 && p.b > 0.0)) throw DomainError("pooled prior has a zero parameter");
  return p;
}

double exceedance_pooled(const AlphaVector& prior, const DataSummary& d, double theta0) {
  check_theta0(theta0);
  d.validate();
  const BetaParams p = pooled_prior(prior);
  const int n = d.n1 + d.n2;
  const int k = d.k1 + d.k2;
  return beta_survival(theta0, p.a + k, p.b + n - k);
}

}  // namespace tox2
