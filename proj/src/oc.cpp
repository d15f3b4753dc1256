#include "tox2/oc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <thread>
#include <tuple>

#include <fmt/format.h>

#include "tox2/error.hpp"

namespace tox2 {

namespace {

void check_truth(const TrueToxicity& t) {
  for (double th : {t.theta1, t.theta2})
    if (!(th >= 0.0 && th <= 1.0)) throw ValidationError(fmt::format("true toxicity {} outside [0, 1]", th));
}

// One binomial step applied along one axis of a mass vector.
std::vector<double> binomial_step(const std::vector<double>& mass, double theta) {
  std::vector<double> next(mass.size() + 1, 0.0);
  for (std::size_t k = 0; k < mass.size(); ++k) {
    if (mass[k] == 0.0) continue;
    next[k] += (1.0 - theta) * mass[k];
    next[k + 1] += theta * mass[k];
  }
  return next;
}

struct Accumulator {
  std::array<double, 2> stop{};
  std::array<double, 2> enrolled{};
  std::array<double, 2> early_events{};
  double events = 0.0;
  double absorbed = 0.0;

  void freeze(Cohort c, int n, int k, double mass, bool stopped) {
    const auto i = static_cast<std::size_t>(index_of(c));
    enrolled[i] += mass * n;
    events += mass * k;
    if (stopped) {
      stop[i] += mass;
      early_events[i] += mass * k;
    }
  }

  OCResult result() const {
    OCResult r;
    r.stop_prob = stop;
    r.expected_enrolled = enrolled;
    r.expected_events_total = events;
    for (std::size_t i = 0; i < 2; ++i)
      if (stop[i] >= kUndefinedMass) r.expected_events_at_early_stop[i] = early_events[i] / stop[i];
    return r;
  }
};

double sum_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

// Under the independent rule a cohort's path never depends on the other
// cohort, so each one is walked on its own. This keeps cohort-1 results
// bit-identical across theta2.
void walk_alone(const RuleEvaluator& ev, double tau, Cohort c, double theta, Accumulator& acc,
                OCDiagnostics& diag) {
  const int cap = ev.config().max_n(c);
  std::vector<double> v{1.0};
  double absorbed = 0.0;
  for (int n = 0; n < cap; ++n) {
    v = binomial_step(v, theta);
    const int nn = n + 1;
    const bool done = nn == cap;
    double active = 0.0;
    for (int k = 0; k <= nn; ++k) {
      double& m = v[static_cast<std::size_t>(k)];
      if (m == 0.0) continue;
      const DataSummary d = c == Cohort::one ? DataSummary{nn, k, 0, 0} : DataSummary{0, 0, nn, k};
      const bool stop = !done && ev.exceedance(d, c) >= tau;
      if (done || stop) {
        acc.freeze(c, nn, k, m, stop);
        absorbed += m;
        m = 0.0;
      } else {
        active += m;
      }
    }
    diag.max_mass_defect = std::max(diag.max_mass_defect, std::fabs(active + absorbed - 1.0));
    ++diag.steps;
  }
}

}  // namespace

std::vector<double> binomial_pmf_rec(int n, double theta) {
  if (n < 0) throw DomainError(fmt::format("binomial size must be >= 0, got {}", n));
  if (!(theta >= 0.0 && theta <= 1.0)) throw DomainError(fmt::format("binomial probability {} outside [0, 1]", theta));
  std::vector<double> p{1.0};
  for (int m = 0; m < n; ++m) p = binomial_step(p, theta);
  return p;
}

OCResult exact_oc(const TrialConfig& cfg, const TrueToxicity& truth, OCDiagnostics* diag) {
  const RuleEvaluator ev(cfg);
  return exact_oc(ev, cfg.tau, truth, diag);
}

OCResult exact_oc(const RuleEvaluator& ev, double tau, const TrueToxicity& truth, OCDiagnostics* diag) {
  const TrialConfig& cfg = ev.config();
  check_truth(truth);
  if (cfg.max_n1 > kMaxExactN || cfg.max_n2 > kMaxExactN)
    throw ResourceLimit(fmt::format("exact OC supports cohort caps up to {} (got {}, {})", kMaxExactN, cfg.max_n1,
                                    cfg.max_n2));
  const int cap1 = cfg.max_n1;
  const int cap2 = cfg.max_n2;
  const bool pooled = ev.rule() == Rule::pooled;

  Accumulator acc;
  OCDiagnostics local_diag;
  if (ev.rule() == Rule::independent) {
    walk_alone(ev, tau, Cohort::one, truth.theta1, acc, local_diag);
    Accumulator second;
    walk_alone(ev, tau, Cohort::two, truth.theta2, second, local_diag);
    acc.stop[1] = second.stop[1];
    acc.enrolled[1] = second.enrolled[1];
    acc.early_events[1] = second.early_events[1];
    acc.events += second.events;
    if (diag) *diag = local_diag;
    return acc.result();
  }
  // (survivor, frozen n, frozen k) -> survivor mass by toxicity count, all at survivor n = frozen n
  std::map<std::tuple<int, int, int>, std::vector<double>> pending;
  double pending_mass = 0.0;

  auto record_defect = [&](double active) {
    local_diag.max_mass_defect = std::max(local_diag.max_mass_defect, std::fabs(active + acc.absorbed - 1.0));
    ++local_diag.steps;
  };

  // Phase 1: both cohorts active, mass[k1][k2] at common enrollment n.
  std::vector<std::vector<double>> mass{{1.0}};
  for (int n = 0; n < std::min(cap1, cap2); ++n) {
    std::vector<std::vector<double>> next(static_cast<std::size_t>(n + 2), std::vector<double>(n + 2, 0.0));
    for (int k1 = 0; k1 <= n; ++k1) {
      const auto row = binomial_step(mass[static_cast<std::size_t>(k1)], truth.theta2);
      for (int k2 = 0; k2 <= n + 1; ++k2) {
        const double m = row[static_cast<std::size_t>(k2)];
        if (m == 0.0) continue;
        next[static_cast<std::size_t>(k1)][static_cast<std::size_t>(k2)] += (1.0 - truth.theta1) * m;
        next[static_cast<std::size_t>(k1 + 1)][static_cast<std::size_t>(k2)] += truth.theta1 * m;
      }
    }
    const int nn = n + 1;
    const bool done1 = nn == cap1;
    const bool done2 = nn == cap2;
    double active = 0.0;
    for (int k1 = 0; k1 <= nn; ++k1) {
      for (int k2 = 0; k2 <= nn; ++k2) {
        double& m = next[static_cast<std::size_t>(k1)][static_cast<std::size_t>(k2)];
        if (m == 0.0) continue;
        const DataSummary d{nn, k1, nn, k2};
        bool stop1 = !done1 && ev.exceedance(d, Cohort::one) >= tau;
        bool stop2 = !done2 && ev.exceedance(d, Cohort::two) >= tau;
        if (pooled && (stop1 || stop2)) {
          stop1 = !done1;
          stop2 = !done2;
        }
        const bool frozen1 = done1 || stop1;
        const bool frozen2 = done2 || stop2;
        if (frozen1) acc.freeze(Cohort::one, nn, k1, m, stop1);
        if (frozen2) acc.freeze(Cohort::two, nn, k2, m, stop2);
        if (frozen1 && frozen2) {
          acc.absorbed += m;
        } else if (frozen1 || frozen2) {
          const int survivor = frozen1 ? 2 : 1;
          const int k_frozen = frozen1 ? k1 : k2;
          const int k_survivor = frozen1 ? k2 : k1;
          const int survivor_cap = frozen1 ? cap2 : cap1;
          auto& v = pending[{survivor, nn, k_frozen}];
          if (v.empty()) v.assign(static_cast<std::size_t>(survivor_cap + 1), 0.0);
          v[static_cast<std::size_t>(k_survivor)] += m;
          pending_mass += m;
        } else {
          active += m;
          continue;
        }
        m = 0.0;
      }
    }
    mass = std::move(next);
    record_defect(active + pending_mass);
  }

  // Phase 2: one cohort frozen, the survivor enrolls alone up to its cap.
  for (auto& [key, start] : pending) {
    const auto [survivor_id, n_frozen, k_frozen] = key;
    const Cohort survivor = cohort_from_int(survivor_id);
    const int cap = survivor == Cohort::one ? cap1 : cap2;
    const double theta = truth.theta(survivor);
    std::vector<double> v(start.begin(), start.begin() + n_frozen + 1);
    pending_mass -= sum_of(v);
    double in_flight = sum_of(v);
    for (int n = n_frozen; n < cap; ++n) {
      v = binomial_step(v, theta);
      const int nn = n + 1;
      const bool done = nn == cap;
      for (int k = 0; k <= nn; ++k) {
        double& m = v[static_cast<std::size_t>(k)];
        if (m == 0.0) continue;
        const DataSummary d = survivor == Cohort::one ? DataSummary{nn, k, n_frozen, k_frozen}
                                                      : DataSummary{n_frozen, k_frozen, nn, k};
        const bool stop = !done && ev.exceedance(d, survivor) >= tau;
        if (done || stop) {
          acc.freeze(survivor, nn, k, m, stop);
          acc.absorbed += m;
          in_flight -= m;
          m = 0.0;
        }
      }
      record_defect(pending_mass + std::max(in_flight, 0.0));
    }
  }

  if (diag) *diag = local_diag;
  return acc.result();
}

double type_I_error(const TrialConfig& cfg, double theta2) {
  const RuleEvaluator ev(cfg);
  return type_I_error(ev, cfg.tau, theta2);
}

double type_I_error(const RuleEvaluator& ev, double tau, double theta2) {
  return exact_oc(ev, tau, TrueToxicity{ev.config().theta01, theta2}).stop_prob[0];
}

TauCalibration calibrate_tau(const TrialConfig& cfg, double target_alpha, double theta2, double grid_step) {
  const RuleEvaluator ev(cfg);
  return calibrate_tau(ev, target_alpha, theta2, grid_step);
}

TauCalibration calibrate_tau(const RuleEvaluator& ev, double target_alpha, double theta2, double grid_step) {
  if (!(target_alpha > 0.0 && target_alpha <= 1.0))
    throw ValidationError(fmt::format("target type I error {} must lie in (0, 1]", target_alpha));
  if (!(grid_step > 0.0 && grid_step < 0.5)) throw ValidationError("grid step must lie in (0, 0.5)");
  const int last = static_cast<int>(std::llround((kTauGridMax - kTauGridMin) / grid_step));
  const auto tau_at = [&](int i) { return kTauGridMin + i * grid_step; };
  int evaluations = 0;
  const auto alpha_at = [&](int i) {
    ++evaluations;
    return type_I_error(ev, tau_at(i), theta2);
  };

  const double alpha_lo = alpha_at(0);
  if (alpha_lo <= target_alpha) return {tau_at(0), alpha_lo, evaluations};
  double alpha_hi = alpha_at(last);
  if (alpha_hi > target_alpha) throw InfeasibleCalibration(target_alpha, tau_at(last), alpha_hi);

  // invariant: alpha(lo) > target >= alpha(hi)
  int lo = 0;
  int hi = last;
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    const double a = alpha_at(mid);
    if (a <= target_alpha) {
      hi = mid;
      alpha_hi = a;
    } else {
      lo = mid;
    }
  }
  return {tau_at(hi), alpha_hi, evaluations};
}

namespace {

constexpr std::int64_t kBlockSize = 1024;

struct Moments {
  double sum = 0.0;
  double sumsq = 0.0;
  std::int64_t count = 0;

  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++count;
  }
  void merge(const Moments& o) {
    sum += o.sum;
    sumsq += o.sumsq;
    count += o.count;
  }
  double mean() const { return sum / static_cast<double>(count); }
  double standard_error() const {
    if (count < 2) return 0.0;
    const double n = static_cast<double>(count);
    const double var = std::max(0.0, (sumsq - sum * sum / n) / (n - 1.0));
    return std::sqrt(var / n);
  }
};

struct BlockStats {
  std::array<Moments, 2> stopped, enrolled, early_events;
  Moments events;

  void merge(const BlockStats& o) {
    for (std::size_t i = 0; i < 2; ++i) {
      stopped[i].merge(o.stopped[i]);
      enrolled[i].merge(o.enrolled[i]);
      early_events[i].merge(o.early_events[i]);
    }
    events.merge(o.events);
  }
};

BlockStats simulate_block(const RuleEvaluator& ev, const TrueToxicity& truth, std::int64_t reps, std::uint64_t seed,
                          std::uint64_t block) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32)};
  std::mt19937_64 rng(seq);
  const auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  const TrialConfig& cfg = ev.config();

  BlockStats stats;
  for (std::int64_t r = 0; r < reps; ++r) {
    TrialState st = TrialState::initial();
    while (st.any_active()) {
      for (Cohort c : {Cohort::one, Cohort::two})
        if (st.status_of(c) == CohortStatus::active) st = apply_outcome(cfg, st, c, uniform() < truth.theta(c));
      if (st.any_active()) st = apply_decision(st, decide(ev, st));
    }
    for (Cohort c : {Cohort::one, Cohort::two}) {
      const auto i = static_cast<std::size_t>(index_of(c));
      const bool stopped = st.status_of(c) == CohortStatus::stopped_toxicity;
      stats.stopped[i].add(stopped ? 1.0 : 0.0);
      stats.enrolled[i].add(st.data.n(c));
      if (stopped) stats.early_events[i].add(st.data.k(c));
    }
    stats.events.add(st.data.k1 + st.data.k2);
  }
  return stats;
}

}  // namespace

MCEstimate mc_simulate(const TrialConfig& cfg, const TrueToxicity& truth, std::int64_t reps, std::uint64_t seed,
                       unsigned workers) {
  const RuleEvaluator ev(cfg);
  return mc_simulate(ev, truth, reps, seed, workers);
}

MCEstimate mc_simulate(const RuleEvaluator& ev, const TrueToxicity& truth, std::int64_t reps, std::uint64_t seed,
                       unsigned workers) {
  check_truth(truth);
  if (reps < 1) throw ValidationError(fmt::format("replicate count must be >= 1, got {}", reps));
  const std::int64_t blocks = (reps + kBlockSize - 1) / kBlockSize;
  std::vector<BlockStats> per_block(static_cast<std::size_t>(blocks));
  const auto run = [&](unsigned worker, unsigned stride) {
    for (std::int64_t b = worker; b < blocks; b += stride) {
      const std::int64_t n = std::min(kBlockSize, reps - b * kBlockSize);
      per_block[static_cast<std::size_t>(b)] = simulate_block(ev, truth, n, seed, static_cast<std::uint64_t>(b));
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(blocks)));
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
  }

  BlockStats total;
  for (const auto& b : per_block) total.merge(b);

  MCEstimate out;
  out.reps = reps;
  for (std::size_t i = 0; i < 2; ++i) {
    out.mean.stop_prob[i] = total.stopped[i].mean();
    out.standard_error.stop_prob[i] = total.stopped[i].standard_error();
    out.mean.expected_enrolled[i] = total.enrolled[i].mean();
    out.standard_error.expected_enrolled[i] = total.enrolled[i].standard_error();
    out.early_stops[i] = total.early_events[i].count;
    if (total.early_events[i].count > 0) out.mean.expected_events_at_early_stop[i] = total.early_events[i].mean();
    if (total.early_events[i].count > 1)
      out.standard_error.expected_events_at_early_stop[i] = total.early_events[i].standard_error();
  }
  out.mean.expected_events_total = total.events.mean();
  out.standard_error.expected_events_total = total.events.standard_error();
  return out;
}

namespace {

PriorElicitation elicitation_of(const TrialConfig& cfg) {
  return cfg.elicitation ? *cfg.elicitation : summarize(cfg.prior);
}

}  // namespace

std::vector<OCRow> oc_sweep(const TrialConfig& base, const std::vector<Rule>& rules, const std::vector<double>& theta1,
                            const std::vector<double>& theta2, std::optional<double> calibrate_alpha) {
  const PriorElicitation summary = elicitation_of(base);
  std::vector<OCRow> rows;
  for (Rule rule : rules) {
    const RuleEvaluator ev(base, rule);
    const double tau = calibrate_alpha ? calibrate_tau(ev, *calibrate_alpha, base.theta02).tau : base.tau;
    for (double t2 : theta2)
      for (double t1 : theta1)
        rows.push_back({rule, t1, t2, summary.ess, summary.rho, tau, exact_oc(ev, tau, TrueToxicity{t1, t2})});
  }
  return rows;
}

std::vector<OCRow> figure_data(int figure, const TrialConfig& base, std::optional<double> calibrate_alpha) {
  const std::vector<double> panels = {0.1, 0.2, 0.3, 0.4};
  const std::vector<Rule> rules(kAllRules.begin(), kAllRules.end());
  switch (figure) {
    case 2: {
      // type I error at fixed tau over the prior ESS
      const PriorElicitation summary = elicitation_of(base);
      std::vector<OCRow> rows;
      for (Rule rule : rules) {
        for (double t2 : panels) {
          for (int ess = 1; ess <= 10; ++ess) {
            PriorElicitation e = summary;
            e.ess = ess;
            const TrialConfig cfg =
                TrialConfig::from_elicitation(e, base.theta01, base.theta02, base.tau, base.max_n1, base.max_n2, rule);
            const RuleEvaluator ev(cfg);
            rows.push_back({rule, base.theta01, t2, e.ess, e.rho, base.tau,
                            exact_oc(ev, base.tau, TrueToxicity{base.theta01, t2})});
          }
        }
      }
      return rows;
    }
    case 3:
    case 4:
    case 5:
      return oc_sweep(base, rules, panels, panels, calibrate_alpha);
    default:
      throw ValidationError(fmt::format("figure must be 2, 3, 4 or 5, got {}", figure));
  }
}

}  // namespace tox2
