#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tox2/monitoring.hpp"
#include "tox2/oc.hpp"

namespace tox2::io {

using nlohmann::json;

/// Shortest decimal form that reads back to the same double.
std::string format_number(double x);

json to_json(const AlphaVector& a);
json to_json(const PriorElicitation& e);
json to_json(const BetaMixture& m);
json to_json(const TrialConfig& cfg);
json to_json(const TrialState& st);
json to_json(const Decision& d, const TrialState& st);
json to_json(const BoundaryTable& t);
json to_json(const OCResult& r);
json to_json(const OCRow& row);

AlphaVector alpha_from_json(const json& j);
PriorElicitation elicitation_from_json(const json& j);

/// Accepts either the elicitation form or the raw alpha form under "prior".
/// Unknown keys are rejected; infeasible elicitations propagate
/// InfeasibleCorrelation.
TrialConfig config_from_json(const json& j);

/// Statuses default to active, or completed when a cohort sits at its cap.
TrialState state_from_json(const json& j, const TrialConfig& cfg);

std::vector<TrialEvent> events_from_json(const json& j);
json events_to_json(const std::vector<TrialEvent>& events);

BoundaryTable boundary_table_from_json(const json& j);

/// CSV: header "k2,1,...,n_max"; cells are integers, "none" or "na".
std::string boundary_table_csv(const BoundaryTable& t);
BoundaryTable parse_boundary_table_csv(std::string_view text);

/// Human-readable form with "." for cells without a boundary.
std::string boundary_table_text(const BoundaryTable& t);

inline constexpr std::string_view kOcCsvHeader =
    "rule,theta1,theta2,ess,rho,tau,stopProb1,stopProb2,expEnrolled1,expEnrolled2,expEventsTotal,"
    "expEventsEarlyStop1,expEventsEarlyStop2";

std::string oc_csv(const std::vector<OCRow>& rows);
std::vector<OCRow> parse_oc_csv(std::string_view text);
std::string oc_text(const std::vector<OCRow>& rows);

/// Throws ValidationError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where);

}  // namespace tox2::io
