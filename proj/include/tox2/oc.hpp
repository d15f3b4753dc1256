#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "tox2/monitoring.hpp"

namespace tox2 {

struct TrueToxicity {
  double theta1 = 0.2;
  double theta2 = 0.2;
  double theta(Cohort c) const noexcept { return c == Cohort::one ? theta1 : theta2; }
};

/// Operating characteristics of one rule at one truth. Index 0 is cohort 1.
struct OCResult {
  std::array<double, 2> stop_prob{};
  std::array<double, 2> expected_enrolled{};
  double expected_events_total = 0.0;
  /// E[k_i at stop | cohort i stops before its cap]; empty when that event
  /// has probability below 1e-12.
  std::array<std::optional<double>, 2> expected_events_at_early_stop;
};

struct OCDiagnostics {
  double max_mass_defect = 0.0;  // max over steps of |active + absorbed - 1|
  int steps = 0;
};

inline constexpr int kMaxExactN = 60;
inline constexpr double kUndefinedMass = 1e-12;

/// P(k | n), k = 0..n, through P(k+1|n+1) = θP(k|n) + (1-θ)P(k+1|n).
std::vector<double> binomial_pmf_rec(int n, double theta);

/// Exact OC by forward recursion. Both cohorts enroll one patient per step
/// and are assessed together; once one cohort is frozen (stopped or at its
/// cap) the other continues alone against the frozen record.
OCResult exact_oc(const TrialConfig& cfg, const TrueToxicity& truth, OCDiagnostics* diag = nullptr);
OCResult exact_oc(const RuleEvaluator& ev, double tau, const TrueToxicity& truth, OCDiagnostics* diag = nullptr);

/// Cohort-1 stop probability at theta1 = theta01.
double type_I_error(const TrialConfig& cfg, double theta2);
double type_I_error(const RuleEvaluator& ev, double tau, double theta2);

struct TauCalibration {
  double tau;
  double achieved_alpha;
  int evaluations;
};

inline constexpr double kTauGridMin = 0.5;
inline constexpr double kTauGridMax = 0.9999;

/// Smallest grid tau whose type I error does not exceed target_alpha, found by
/// bisection over the grid. Throws InfeasibleCalibration when even the grid
/// maximum is too permissive.
TauCalibration calibrate_tau(const TrialConfig& cfg, double target_alpha, double theta2, double grid_step = 1e-4);
TauCalibration calibrate_tau(const RuleEvaluator& ev, double target_alpha, double theta2, double grid_step = 1e-4);

struct MCEstimate {
  OCResult mean;
  OCResult standard_error;
  std::array<std::int64_t, 2> early_stops{};
  std::int64_t reps = 0;
};

/// Patient-by-patient simulation on the same schedule as exact_oc. Replicates
/// are split into fixed blocks with seeds derived from (seed, block), so the
/// result does not depend on the worker count.
MCEstimate mc_simulate(const TrialConfig& cfg, const TrueToxicity& truth, std::int64_t reps, std::uint64_t seed,
                       unsigned workers = 1);
MCEstimate mc_simulate(const RuleEvaluator& ev, const TrueToxicity& truth, std::int64_t reps, std::uint64_t seed,
                       unsigned workers = 1);

/// One line of an OC sweep.
struct OCRow {
  Rule rule;
  double theta1;
  double theta2;
  double ess;
  double rho;
  double tau;
  OCResult oc;
};

/// All rules over the theta1 x theta2 grid at the base configuration. When
/// calibrate_alpha is set, tau is chosen per rule at theta2 = theta02.
std::vector<OCRow> oc_sweep(const TrialConfig& base, const std::vector<Rule>& rules, const std::vector<double>& theta1,
                            const std::vector<double>& theta2, std::optional<double> calibrate_alpha = std::nullopt);

/// Grids behind the published figures: 2 is type I error over ESS 1..10 in
/// theta2 panels; 3, 4 and 5 sweep theta1 in theta2 panels at the base ESS.
std::vector<OCRow> figure_data(int figure, const TrialConfig& base, std::optional<double> calibrate_alpha = std::nullopt);

}  // namespace tox2
