#pragma once

#include <array>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tox2/bivariate_beta.hpp"
#include "tox2/posterior.hpp"

namespace tox2 {

enum class Rule { correlated, independent, pooled };

inline constexpr std::array<Rule, 3> kAllRules = {Rule::correlated, Rule::independent, Rule::pooled};

std::string_view to_string(Rule rule) noexcept;
Rule rule_from_string(std::string_view name);

struct TrialConfig {
  double theta01 = 0.2;
  double theta02 = 0.2;
  double tau = 0.98;
  int max_n1 = 20;
  int max_n2 = 20;
  AlphaVector prior;
  /// Present when the prior was elicited from summaries; kept for reporting and sweeps.
  std::optional<PriorElicitation> elicitation;
  Rule rule = Rule::correlated;

  double theta0(Cohort c) const noexcept { return c == Cohort::one ? theta01 : theta02; }
  int max_n(Cohort c) const noexcept { return c == Cohort::one ? max_n1 : max_n2; }

  /// Throws ValidationError on any range violation.
  void validate() const;

  /// Elicits the prior; propagates InfeasibleCorrelation.
  static TrialConfig from_elicitation(const PriorElicitation& e, double theta01, double theta02, double tau,
                                      int max_n1, int max_n2, Rule rule);
};

enum class CohortStatus { active, stopped_toxicity, completed };

std::string_view to_string(CohortStatus s) noexcept;
CohortStatus status_from_string(std::string_view name);

struct StopRecord {
  int n;
  int k;
  double exceedance;
};

/// Live per-cohort enrollment and status. Immutable in use: every transition
/// returns a new value.
struct TrialState {
  DataSummary data;
  std::array<CohortStatus, 2> status{CohortStatus::active, CohortStatus::active};
  std::array<std::optional<StopRecord>, 2> stops;

  CohortStatus status_of(Cohort c) const noexcept { return status[static_cast<std::size_t>(index_of(c))]; }
  bool any_active() const noexcept {
    return status[0] == CohortStatus::active || status[1] == CohortStatus::active;
  }

  /// Throws StateError when counts, caps and statuses disagree.
  void validate(const TrialConfig& cfg) const;

  /// Fresh trial with no enrollment.
  static TrialState initial() { return {}; }
};

struct CohortDecision {
  double exceedance = 0.0;
  bool stop = false;
};

using Decision = std::array<CohortDecision, 2>;

/// Exceedance probability for a configured rule, memoized per data summary.
/// Safe for concurrent use once constructed.
class RuleEvaluator {
 public:
  explicit RuleEvaluator(const TrialConfig& cfg);
  RuleEvaluator(const TrialConfig& cfg, Rule rule);

  Rule rule() const noexcept { return rule_; }
  const TrialConfig& config() const noexcept { return cfg_; }

  double exceedance(const DataSummary& d, Cohort cohort) const;

 private:
  double compute(const DataSummary& d, Cohort cohort) const;

  TrialConfig cfg_;
  Rule rule_;
  std::unique_ptr<MarginalPosteriorEngine> engine_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::uint64_t, double> memo_;
};

/// Stop/continue for every cohort at the current state. Active cohorts are
/// evaluated on the full data summary (including frozen counts of a stopped
/// cohort); a pooled-rule stop halts every active cohort. Stopped cohorts
/// report their frozen record; completed cohorts report the current
/// exceedance with stop = false.
Decision decide(const TrialConfig& cfg, const TrialState& st);
Decision decide(const RuleEvaluator& ev, const TrialState& st);
Decision decide(const RuleEvaluator& ev, const TrialState& st, double tau);

/// Records one patient outcome. Marks the cohort completed at its cap.
TrialState apply_outcome(const TrialConfig& cfg, const TrialState& st, Cohort cohort, bool toxic);

/// Freezes every active cohort whose decision says stop.
TrialState apply_decision(const TrialState& st, const Decision& d);

struct TrialEvent {
  int seq;
  Cohort cohort;
  bool toxic;
};

/// Replays an event log with a decision after every outcome. seq must be
/// strictly increasing.
TrialState replay(const TrialConfig& cfg, std::span<const TrialEvent> events);
TrialState replay(const RuleEvaluator& ev, std::span<const TrialEvent> events);

/// Smallest toxicity count for `cohort`, holding the other cohort's data
/// fixed, that would trigger a stop at the cohort's current enrollment.
std::optional<int> stopping_count(const RuleEvaluator& ev, const DataSummary& d, Cohort cohort);

struct BoundaryCell {
  bool applicable = true;         // false when k2 > n
  std::optional<int> k1;          // empty: no count triggers a stop
};

/// Cohort-1 stopping boundaries with n1 = n2 = n. rows[k2][n - 1].
struct BoundaryTable {
  Rule rule = Rule::correlated;
  int n_max = 0;
  std::vector<std::vector<BoundaryCell>> rows;

  const BoundaryCell& cell(int k2, int n) const {
    return rows[static_cast<std::size_t>(k2)][static_cast<std::size_t>(n - 1)];
  }
};

BoundaryTable boundary_table(const TrialConfig& cfg, int n_max);
BoundaryTable boundary_table(const RuleEvaluator& ev, int n_max);

}  // namespace tox2
