#include "tox2/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "tox2/error.hpp"

namespace tox2::io {

namespace {

double number_field(const json& j, const char* key, std::string_view where) {
  if (!j.contains(key)) throw ValidationError(fmt::format("{}: missing \"{}\"", where, key));
  const auto& v = j.at(key);
  if (!v.is_number()) throw ValidationError(fmt::format("{}: \"{}\" must be a number", where, key));
  return v.get<double>();
}

int int_field(const json& j, const char* key, std::string_view where) {
  if (!j.contains(key)) throw ValidationError(fmt::format("{}: missing \"{}\"", where, key));
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ValidationError(fmt::format("{}: \"{}\" must be an integer", where, key));
  return v.get<int>();
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out;
  for (auto& l : split(text, '\n')) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
    if (!l.empty()) out.push_back(std::move(l));
  }
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError(fmt::format("not a number: '{}'", s));
  return v;
}

int parse_int(const std::string& s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError(fmt::format("not an integer: '{}'", s));
  return v;
}

std::string optional_number(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string cell_token(const BoundaryCell& c) {
  if (!c.applicable) return "na";
  return c.k1 ? std::to_string(*c.k1) : "none";
}

BoundaryCell cell_from_token(const std::string& t) {
  if (t == "na") return {false, std::nullopt};
  if (t == "none") return {true, std::nullopt};
  return {true, parse_int(t)};
}

}  // namespace

std::string format_number(double x) { return fmt::format("{}", x); }

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw ValidationError(fmt::format("{} must be a JSON object", where));
  for (const auto& [key, _] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ValidationError(fmt::format("{}: unknown key \"{}\"", where, key));
}

json to_json(const AlphaVector& a) { return {{"a11", a.a11}, {"a10", a.a10}, {"a01", a.a01}, {"a00", a.a00}}; }

json to_json(const PriorElicitation& e) { return {{"p1", e.p1}, {"p2", e.p2}, {"ess", e.ess}, {"rho", e.rho}}; }

json to_json(const BetaMixture& m) {
  json out = json::array();
  for (const auto& c : m.components) out.push_back({{"w", c.weight}, {"a", c.a}, {"b", c.b}});
  return out;
}

json to_json(const TrialConfig& cfg) {
  return {{"theta01", cfg.theta01},
          {"theta02", cfg.theta02},
          {"tau", cfg.tau},
          {"maxN1", cfg.max_n1},
          {"maxN2", cfg.max_n2},
          {"prior", cfg.elicitation ? to_json(*cfg.elicitation) : to_json(cfg.prior)},
          {"rule", std::string(to_string(cfg.rule))}};
}

json to_json(const TrialState& st) {
  json j = {{"n1", st.data.n1},
            {"k1", st.data.k1},
            {"n2", st.data.n2},
            {"k2", st.data.k2},
            {"status1", std::string(to_string(st.status[0]))},
            {"status2", std::string(to_string(st.status[1]))}};
  for (int i = 0; i < 2; ++i) {
    const auto& s = st.stops[static_cast<std::size_t>(i)];
    if (s) j[fmt::format("stop{}", i + 1)] = {{"n", s->n}, {"k", s->k}, {"exceedance", s->exceedance}};
  }
  return j;
}

json to_json(const Decision& d, const TrialState& st) {
  json out = json::array();
  for (int i = 0; i < 2; ++i) {
    const auto& c = d[static_cast<std::size_t>(i)];
    out.push_back({{"cohort", i + 1},
                   {"exceedance", c.exceedance},
                   {"stop", c.stop},
                   {"status", std::string(to_string(st.status[static_cast<std::size_t>(i)]))}});
  }
  return out;
}

AlphaVector alpha_from_json(const json& j) {
  reject_unknown_keys(j, {"a11", "a10", "a01", "a00"}, "alpha");
  AlphaVector a{number_field(j, "a11", "alpha"), number_field(j, "a10", "alpha"), number_field(j, "a01", "alpha"),
                number_field(j, "a00", "alpha")};
  try {
    a.validate();
  } catch (const DomainError& e) {
    throw ValidationError(e.what());
  }
  return a;
}

PriorElicitation elicitation_from_json(const json& j) {
  reject_unknown_keys(j, {"p1", "p2", "ess", "rho"}, "prior");
  return {number_field(j, "p1", "prior"), number_field(j, "p2", "prior"), number_field(j, "ess", "prior"),
          number_field(j, "rho", "prior")};
}

TrialConfig config_from_json(const json& j) {
  reject_unknown_keys(j, {"theta01", "theta02", "tau", "maxN", "maxN1", "maxN2", "prior", "rule"}, "config");
  if (!j.contains("prior")) throw ValidationError("config: missing \"prior\"");
  const double theta01 = number_field(j, "theta01", "config");
  const double theta02 = j.contains("theta02") ? number_field(j, "theta02", "config") : theta01;
  const double tau = number_field(j, "tau", "config");
  int max_n1 = 0;
  int max_n2 = 0;
  if (j.contains("maxN")) {
    if (j.contains("maxN1") || j.contains("maxN2"))
      throw ValidationError("config: give either \"maxN\" or \"maxN1\"/\"maxN2\", not both");
    max_n1 = max_n2 = int_field(j, "maxN", "config");
  } else {
    max_n1 = int_field(j, "maxN1", "config");
    max_n2 = int_field(j, "maxN2", "config");
  }
  Rule rule = Rule::correlated;
  if (j.contains("rule")) {
    if (!j["rule"].is_string()) throw ValidationError("config: \"rule\" must be a string");
    rule = rule_from_string(j["rule"].get<std::string>());
  }
  const json& prior = j["prior"];
  if (!prior.is_object()) throw ValidationError("config: \"prior\" must be an object");
  if (prior.contains("a11")) {
    TrialConfig cfg;
    cfg.theta01 = theta01;
    cfg.theta02 = theta02;
    cfg.tau = tau;
    cfg.max_n1 = max_n1;
    cfg.max_n2 = max_n2;
    cfg.rule = rule;
    cfg.prior = alpha_from_json(prior);
    cfg.validate();
    return cfg;
  }
  return TrialConfig::from_elicitation(elicitation_from_json(prior), theta01, theta02, tau, max_n1, max_n2, rule);
}

TrialState state_from_json(const json& j, const TrialConfig& cfg) {
  reject_unknown_keys(j, {"n1", "k1", "n2", "k2", "status1", "status2", "stop1", "stop2"}, "state");
  TrialState st;
  st.data = {int_field(j, "n1", "state"), int_field(j, "k1", "state"), int_field(j, "n2", "state"),
             int_field(j, "k2", "state")};
  for (Cohort c : {Cohort::one, Cohort::two}) {
    const auto i = static_cast<std::size_t>(index_of(c));
    const std::string skey = fmt::format("status{}", i + 1);
    const std::string rkey = fmt::format("stop{}", i + 1);
    if (j.contains(skey)) {
      if (!j[skey].is_string()) throw ValidationError(fmt::format("state: \"{}\" must be a string", skey));
      st.status[i] = status_from_string(j[skey].get<std::string>());
    } else {
      st.status[i] = st.data.n(c) >= cfg.max_n(c) ? CohortStatus::completed : CohortStatus::active;
    }
    if (st.status[i] == CohortStatus::stopped_toxicity) {
      double exceedance = std::nan("");
      if (j.contains(rkey)) {
        reject_unknown_keys(j[rkey], {"n", "k", "exceedance"}, rkey);
        if (j[rkey].contains("exceedance")) exceedance = number_field(j[rkey], "exceedance", rkey);
      }
      st.stops[i] = StopRecord{st.data.n(c), st.data.k(c), exceedance};
    } else if (j.contains(rkey)) {
      throw ValidationError(fmt::format("state: \"{}\" given for a cohort that has not stopped", rkey));
    }
  }
  st.validate(cfg);
  return st;
}

std::vector<TrialEvent> events_from_json(const json& j) {
  if (!j.is_array()) throw ValidationError("event log must be a JSON array");
  std::vector<TrialEvent> out;
  for (const auto& e : j) {
    reject_unknown_keys(e, {"seq", "cohort", "toxic"}, "event");
    if (!e.contains("toxic") || !e["toxic"].is_boolean()) throw ValidationError("event: \"toxic\" must be a boolean");
    const int cohort = int_field(e, "cohort", "event");
    if (cohort != 1 && cohort != 2) throw ValidationError(fmt::format("event: cohort must be 1 or 2, got {}", cohort));
    out.push_back({int_field(e, "seq", "event"), cohort_from_int(cohort), e["toxic"].get<bool>()});
  }
  return out;
}

json events_to_json(const std::vector<TrialEvent>& events) {
  json out = json::array();
  for (const auto& e : events) out.push_back({{"seq", e.seq}, {"cohort", static_cast<int>(e.cohort)}, {"toxic", e.toxic}});
  return out;
}

json to_json(const BoundaryTable& t) {
  json rows = json::array();
  for (std::size_t k2 = 0; k2 < t.rows.size(); ++k2) {
    json cells = json::array();
    for (const auto& c : t.rows[k2]) {
      if (c.applicable && c.k1)
        cells.push_back(*c.k1);
      else
        cells.push_back(cell_token(c));
    }
    rows.push_back({{"k2", k2}, {"cells", cells}});
  }
  return {{"rule", std::string(to_string(t.rule))}, {"nMax", t.n_max}, {"rows", rows}};
}

BoundaryTable boundary_table_from_json(const json& j) {
  reject_unknown_keys(j, {"rule", "nMax", "rows"}, "boundary table");
  BoundaryTable t;
  t.rule = rule_from_string(j.at("rule").get<std::string>());
  t.n_max = int_field(j, "nMax", "boundary table");
  for (const auto& row : j.at("rows")) {
    std::vector<BoundaryCell> cells;
    for (const auto& c : row.at("cells"))
      cells.push_back(c.is_number_integer() ? BoundaryCell{true, c.get<int>()} : cell_from_token(c.get<std::string>()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::string boundary_table_csv(const BoundaryTable& t) {
  std::string out = "k2";
  for (int n = 1; n <= t.n_max; ++n) out += fmt::format(",{}", n);
  out += '\n';
  for (std::size_t k2 = 0; k2 < t.rows.size(); ++k2) {
    out += std::to_string(k2);
    for (const auto& c : t.rows[k2]) out += "," + cell_token(c);
    out += '\n';
  }
  return out;
}

BoundaryTable parse_boundary_table_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw ValidationError("empty boundary table CSV");
  const auto header = split(lines[0], ',');
  if (header.empty() || header[0] != "k2") throw ValidationError("boundary table CSV must start with a k2 column");
  BoundaryTable t;
  t.n_max = static_cast<int>(header.size()) - 1;
  for (int n = 1; n <= t.n_max; ++n)
    if (parse_int(header[static_cast<std::size_t>(n)]) != n) throw ValidationError("boundary table CSV header out of order");
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split(lines[r], ',');
    if (fields.size() != header.size()) throw ValidationError(fmt::format("boundary table CSV row {} has wrong width", r));
    if (parse_int(fields[0]) != static_cast<int>(r - 1)) throw ValidationError("boundary table CSV rows out of order");
    std::vector<BoundaryCell> cells;
    for (std::size_t i = 1; i < fields.size(); ++i) cells.push_back(cell_from_token(fields[i]));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::string boundary_table_text(const BoundaryTable& t) {
  std::ostringstream os;
  os << fmt::format("Stopping boundary for cohort 1 ({} rule): minimal k1 with n1 = n2 = n\n", to_string(t.rule));
  os << fmt::format("{:>6} |", "k2\\n");
  for (int n = 1; n <= t.n_max; ++n) os << fmt::format("{:>4}", n);
  os << '\n' << std::string(8 + 4 * static_cast<std::size_t>(t.n_max), '-') << '\n';
  for (std::size_t k2 = 0; k2 < t.rows.size(); ++k2) {
    os << fmt::format("{:>6} |", k2);
    for (const auto& c : t.rows[k2]) os << fmt::format("{:>4}", c.applicable && c.k1 ? std::to_string(*c.k1) : ".");
    os << '\n';
  }
  return os.str();
}

json to_json(const OCResult& r) {
  return {{"stopProb1", r.stop_prob[0]},
          {"stopProb2", r.stop_prob[1]},
          {"expEnrolled1", r.expected_enrolled[0]},
          {"expEnrolled2", r.expected_enrolled[1]},
          {"expEventsTotal", r.expected_events_total},
          {"expEventsEarlyStop1", optional_json(r.expected_events_at_early_stop[0])},
          {"expEventsEarlyStop2", optional_json(r.expected_events_at_early_stop[1])}};
}

json to_json(const OCRow& row) {
  json j = to_json(row.oc);
  j["rule"] = std::string(to_string(row.rule));
  j["theta1"] = row.theta1;
  j["theta2"] = row.theta2;
  j["ess"] = row.ess;
  j["rho"] = row.rho;
  j["tau"] = row.tau;
  return j;
}

std::string oc_csv(const std::vector<OCRow>& rows) {
  std::string out(kOcCsvHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(r.rule), format_number(r.theta1),
                       format_number(r.theta2), format_number(r.ess), format_number(r.rho), format_number(r.tau),
                       format_number(r.oc.stop_prob[0]), format_number(r.oc.stop_prob[1]),
                       format_number(r.oc.expected_enrolled[0]), format_number(r.oc.expected_enrolled[1]),
                       format_number(r.oc.expected_events_total), optional_number(r.oc.expected_events_at_early_stop[0]),
                       optional_number(r.oc.expected_events_at_early_stop[1]));
  }
  return out;
}

std::vector<OCRow> parse_oc_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kOcCsvHeader) throw ValidationError("OC CSV header does not match the schema");
  std::vector<OCRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != 13) throw ValidationError(fmt::format("OC CSV row {} has {} fields, expected 13", i, f.size()));
    OCRow r{rule_from_string(f[0]), parse_double(f[1]), parse_double(f[2]), parse_double(f[3]),
            parse_double(f[4]),     parse_double(f[5]), {}};
    r.oc.stop_prob = {parse_double(f[6]), parse_double(f[7])};
    r.oc.expected_enrolled = {parse_double(f[8]), parse_double(f[9])};
    r.oc.expected_events_total = parse_double(f[10]);
    for (std::size_t c = 0; c < 2; ++c)
      if (f[11 + c] != "NA") r.oc.expected_events_at_early_stop[c] = parse_double(f[11 + c]);
    rows.push_back(r);
  }
  return rows;
}

std::string oc_text(const std::vector<OCRow>& rows) {
  std::ostringstream os;
  os << fmt::format("{:<12}{:>7}{:>7}{:>6}{:>6}{:>8}{:>10}{:>10}{:>9}{:>9}{:>9}{:>9}{:>9}\n", "rule", "theta1",
                    "theta2", "ess", "rho", "tau", "stopP1", "stopP2", "E[n1]", "E[n2]", "E[evt]", "E[k1|s]",
                    "E[k2|s]");
  const auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{:.3f}", *v) : std::string("NA"); };
  for (const auto& r : rows)
    os << fmt::format("{:<12}{:>7.3f}{:>7.3f}{:>6.2f}{:>6.2f}{:>8.4f}{:>10.5f}{:>10.5f}{:>9.3f}{:>9.3f}{:>9.3f}{:>9}{:>9}\n",
                      to_string(r.rule), r.theta1, r.theta2, r.ess, r.rho, r.tau, r.oc.stop_prob[0],
                      r.oc.stop_prob[1], r.oc.expected_enrolled[0], r.oc.expected_enrolled[1],
                      r.oc.expected_events_total, opt(r.oc.expected_events_at_early_stop[0]),
                      opt(r.oc.expected_events_at_early_stop[1]));
  return os.str();
}

}  // namespace tox2::io
