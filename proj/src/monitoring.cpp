#include "tox2/monitoring.hpp"

#include <cmath>

#include <fmt/format.h>

#include "tox2/error.hpp"

namespace tox2 {

namespace {

constexpr int kMaxCohortSize = 1000;

std::uint64_t state_key(const DataSummary& d, Cohort c) {
  return (static_cast<std::uint64_t>(d.n1) << 48) | (static_cast<std::uint64_t>(d.k1) << 34) |
         (static_cast<std::uint64_t>(d.n2) << 20) | (static_cast<std::uint64_t>(d.k2) << 6) |
         static_cast<std::uint64_t>(c);
}

std::size_t idx(Cohort c) { return static_cast<std::size_t>(index_of(c)); }

}  // namespace

std::string_view to_string(Rule rule) noexcept {
  switch (rule) {
    case Rule::correlated: return "correlated";
    case Rule::independent: return "independent";
    case Rule::pooled: return "pooled";
  }
  return "unknown";
}

Rule rule_from_string(std::string_view name) {
  for (Rule r : kAllRules)
    if (to_string(r) == name) return r;
  throw ValidationError(fmt::format("unknown rule '{}' (expected correlated, independent or pooled)", name));
}

std::string_view to_string(CohortStatus s) noexcept {
  switch (s) {
    case CohortStatus::active: return "active";
    case CohortStatus::stopped_toxicity: return "stopped_toxicity";
    case CohortStatus::completed: return "completed";
  }
  return "unknown";
}

CohortStatus status_from_string(std::string_view name) {
  for (auto s : {CohortStatus::active, CohortStatus::stopped_toxicity, CohortStatus::completed})
    if (to_string(s) == name) return s;
  throw ValidationError(fmt::format("unknown cohort status '{}'", name));
}

void TrialConfig::validate() const {
  for (double t : {theta01, theta02})
    if (!(t > 0.0 && t < 1.0)) throw ValidationError(fmt::format("toxicity threshold {} must lie in (0, 1)", t));
  if (!(tau >= 0.5 && tau < 1.0)) throw ValidationError(fmt::format("tau {} must lie in [0.5, 1)", tau));
  for (int n : {max_n1, max_n2})
    if (n < 1 || n > kMaxCohortSize)
      throw ValidationError(fmt::format("maximum cohort size {} must lie in 1..{}", n, kMaxCohortSize));
  try {
    prior.validate();
  } catch (const DomainError& e) {
    throw ValidationError(e.what());
  }
}

TrialConfig TrialConfig::from_elicitation(const PriorElicitation& e, double theta01, double theta02, double tau,
                                          int max_n1, int max_n2, Rule rule) {
  TrialConfig cfg;
  cfg.theta01 = theta01;
  cfg.theta02 = theta02;
  cfg.tau = tau;
  cfg.max_n1 = max_n1;
  cfg.max_n2 = max_n2;
  cfg.rule = rule;
  cfg.elicitation = e;
  try {
    cfg.prior = elicit(e);
  } catch (const DomainError& err) {
    throw ValidationError(err.what());
  }
  cfg.validate();
  return cfg;
}

void TrialState::validate(const TrialConfig& cfg) const {
  try {
    data.validate();
  } catch (const DomainError& e) {
    throw StateError(e.what());
  }
  for (Cohort c : {Cohort::one, Cohort::two}) {
    const int n = data.n(c);
    const auto& stop = stops[idx(c)];
    if (n > cfg.max_n(c))
      throw StateError(fmt::format("cohort {} enrolled {} beyond its cap {}", static_cast<int>(c), n, cfg.max_n(c)));
    switch (status_of(c)) {
      case CohortStatus::active:
        if (n >= cfg.max_n(c))
          throw StateError(fmt::format("cohort {} is active but already at its cap", static_cast<int>(c)));
        if (stop) throw StateError(fmt::format("cohort {} is active but carries a stop record", static_cast<int>(c)));
        break;
      case CohortStatus::completed:
        if (n != cfg.max_n(c))
          throw StateError(fmt::format("cohort {} is completed below its cap", static_cast<int>(c)));
        if (stop) throw StateError(fmt::format("cohort {} is completed but carries a stop record", static_cast<int>(c)));
        break;
      case CohortStatus::stopped_toxicity:
        if (!stop || stop->n != n || stop->k != data.k(c))
          throw StateError(fmt::format("cohort {} stop record does not match its counts", static_cast<int>(c)));
        break;
    }
  }
}

RuleEvaluator::RuleEvaluator(const TrialConfig& cfg) : RuleEvaluator(cfg, cfg.rule) {}

RuleEvaluator::RuleEvaluator(const TrialConfig& cfg, Rule rule) : cfg_(cfg), rule_(rule) {
  cfg_.validate();
  cfg_.rule = rule;
  if (rule_ == Rule::correlated)
    engine_ = std::make_unique<MarginalPosteriorEngine>(cfg_.prior, cfg_.max_n1 + cfg_.max_n2);
}

double RuleEvaluator::compute(const DataSummary& d, Cohort cohort) const {
  const double theta0 = cfg_.theta0(cohort);
  switch (rule_) {
    case Rule::correlated: return engine_->exceedance(d, theta0, cohort);
    case Rule::independent: return exceedance_independent(cfg_.prior, d.n(cohort), d.k(cohort), theta0, cohort);
    case Rule::pooled: return exceedance_pooled(cfg_.prior, d, theta0);
  }
  return 0.0;
}

double RuleEvaluator::exceedance(const DataSummary& d, Cohort cohort) const {
  if (d.n1 > cfg_.max_n1 || d.n2 > cfg_.max_n2)
    throw StateError(fmt::format("data ({}, {}) exceed the configured caps", d.n1, d.n2));
  const auto key = state_key(d, cohort);
  {
    std::shared_lock lock(mutex_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  }
  const double value = compute(d, cohort);
  std::unique_lock lock(mutex_);
  memo_.emplace(key, value);
  return value;
}

Decision decide(const TrialConfig& cfg, const TrialState& st) {
  const RuleEvaluator ev(cfg);
  return decide(ev, st);
}

Decision decide(const RuleEvaluator& ev, const TrialState& st) { return decide(ev, st, ev.config().tau); }

Decision decide(const RuleEvaluator& ev, const TrialState& st, double tau) {
  st.validate(ev.config());
  Decision out{};
  bool any_stop = false;
  for (Cohort c : {Cohort::one, Cohort::two}) {
    auto& slot = out[idx(c)];
    switch (st.status_of(c)) {
      case CohortStatus::stopped_toxicity:
        // A record loaded without its exceedance is re-evaluated on the current data.
        slot = {std::isnan(st.stops[idx(c)]->exceedance) ? ev.exceedance(st.data, c) : st.stops[idx(c)]->exceedance,
                true};
        break;
      case CohortStatus::completed:
        slot = {ev.exceedance(st.data, c), false};
        break;
      case CohortStatus::active:
        slot.exceedance = ev.exceedance(st.data, c);
        slot.stop = slot.exceedance >= tau;
        any_stop = any_stop || slot.stop;
        break;
    }
  }
  if (ev.rule() == Rule::pooled && any_stop) {
    for (Cohort c : {Cohort::one, Cohort::two})
      if (st.status_of(c) == CohortStatus::active) out[idx(c)].stop = true;
  }
  return out;
}

TrialState apply_outcome(const TrialConfig& cfg, const TrialState& st, Cohort cohort, bool toxic) {
  if (st.status_of(cohort) != CohortStatus::active)
    throw StateError(fmt::format("cohort {} is {}; no further outcomes may be recorded", static_cast<int>(cohort),
                                 to_string(st.status_of(cohort))));
  if (st.data.n(cohort) >= cfg.max_n(cohort))
    throw StateError(fmt::format("cohort {} is already at its cap", static_cast<int>(cohort)));
  TrialState next = st;
  int& n = cohort == Cohort::one ? next.data.n1 : next.data.n2;
  int& k = cohort == Cohort::one ? next.data.k1 : next.data.k2;
  ++n;
  if (toxic) ++k;
  if (n == cfg.max_n(cohort)) next.status[idx(cohort)] = CohortStatus::completed;
  return next;
}

TrialState apply_decision(const TrialState& st, const Decision& d) {
  TrialState next = st;
  for (Cohort c : {Cohort::one, Cohort::two}) {
    if (st.status_of(c) != CohortStatus::active || !d[idx(c)].stop) continue;
    next.status[idx(c)] = CohortStatus::stopped_toxicity;
    next.stops[idx(c)] = StopRecord{st.data.n(c), st.data.k(c), d[idx(c)].exceedance};
  }
  return next;
}

TrialState replay(const TrialConfig& cfg, std::span<const TrialEvent> events) {
  const RuleEvaluator ev(cfg);
  return replay(ev, events);
}

TrialState replay(const RuleEvaluator& ev, std::span<const TrialEvent> events) {
  TrialState st = TrialState::initial();
  std::optional<int> last_seq;
  for (const auto& e : events) {
    if (last_seq && e.seq <= *last_seq)
      throw ValidationError(fmt::format("event seq {} does not increase (previous {})", e.seq, *last_seq));
    last_seq = e.seq;
    st = apply_outcome(ev.config(), st, e.cohort, e.toxic);
    if (st.any_active()) st = apply_decision(st, decide(ev, st));
  }
  return st;
}

std::optional<int> stopping_count(const RuleEvaluator& ev, const DataSummary& d, Cohort cohort) {
  DataSummary probe = d;
  int& k = cohort == Cohort::one ? probe.k1 : probe.k2;
  for (int cand = 0; cand <= d.n(cohort); ++cand) {
    k = cand;
    if (ev.exceedance(probe, cohort) >= ev.config().tau) return cand;
  }
  return std::nullopt;
}

BoundaryTable boundary_table(const TrialConfig& cfg, int n_max) {
  TrialConfig widened = cfg;
  widened.max_n1 = std::max(cfg.max_n1, n_max);
  widened.max_n2 = std::max(cfg.max_n2, n_max);
  const RuleEvaluator ev(widened);
  return boundary_table(ev, n_max);
}

BoundaryTable boundary_table(const RuleEvaluator& ev, int n_max) {
  if (n_max < 1) throw ValidationError(fmt::format("n_max must be >= 1, got {}", n_max));
  BoundaryTable table;
  table.rule = ev.rule();
  table.n_max = n_max;
  table.rows.assign(static_cast<std::size_t>(n_max + 1), std::vector<BoundaryCell>(static_cast<std::size_t>(n_max)));
  for (int k2 = 0; k2 <= n_max; ++k2) {
    for (int n = 1; n <= n_max; ++n) {
      auto& cell = table.rows[static_cast<std::size_t>(k2)][static_cast<std::size_t>(n - 1)];
      if (k2 > n) {
        cell.applicable = false;
        continue;
      }
      cell.k1 = stopping_count(ev, DataSummary{n, 0, n, k2}, Cohort::one);
    }
  }
  return table;
}

}  // namespace tox2
