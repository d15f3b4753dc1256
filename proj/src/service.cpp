#include "tox2/service.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "tox2/error.hpp"
#include "tox2/io.hpp"
#include "tox2/version.hpp"

namespace tox2::service {

using nlohmann::json;

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
  json details = json::object();
};

Response error_response(const HttpError& e) {
  return {e.status, {{"code", e.code}, {"message", e.message}, {"details", e.details}}};
}

json require_object(const json& body, const char* key) {
  if (!body.contains(key)) throw ValidationError(fmt::format("missing \"{}\"", key));
  return body.at(key);
}

TrialConfig config_of(const json& body) { return io::config_from_json(require_object(body, "config")); }

TrialState state_of(const json& body, const TrialConfig& cfg) {
  return body.contains("state") ? io::state_from_json(body.at("state"), cfg) : TrialState::initial();
}

json boundary_k(const std::optional<int>& k) { return k ? json(*k) : json(nullptr); }

json per_cohort(const RuleEvaluator& ev, const TrialState& st) {
  const Decision d = decide(ev, st);
  json out = json::array();
  for (Cohort c : {Cohort::one, Cohort::two}) {
    const auto i = static_cast<std::size_t>(index_of(c));
    out.push_back({{"cohort", static_cast<int>(c)},
                   {"status", std::string(to_string(st.status[i]))},
                   {"exceedance", d[i].exceedance},
                   {"stop", d[i].stop},
                   {"boundaryK", boundary_k(stopping_count(ev, st.data, c))}});
  }
  return out;
}

json decision_body(const TrialConfig& cfg, const TrialState& st) {
  json comparison = json::object();
  json primary;
  for (Rule r : kAllRules) {
    const RuleEvaluator ev(cfg, r);
    json cohorts = per_cohort(ev, st);
    if (r == cfg.rule) primary = cohorts;
    comparison[std::string(to_string(r))] = std::move(cohorts);
  }
  return {{"rule", std::string(to_string(cfg.rule))}, {"perCohort", primary}, {"ruleComparison", comparison}};
}

Response post_decision(const json& body) {
  io::reject_unknown_keys(body, {"config", "state"}, "request");
  const TrialConfig cfg = config_of(body);
  return {200, decision_body(cfg, state_of(body, cfg))};
}

Response post_whatif(const json& body) {
  io::reject_unknown_keys(body, {"config", "state", "horizon"}, "request");
  const TrialConfig cfg = config_of(body);
  const TrialState st = state_of(body, cfg);
  const json& h = require_object(body, "horizon");
  if (!h.is_number_integer() || h.get<int>() < 0) throw ValidationError("\"horizon\" must be a nonnegative integer");
  const int horizon = h.get<int>();
  std::array<int, 2> span{0, 0};
  for (Cohort c : {Cohort::one, Cohort::two}) {
    if (st.status_of(c) != CohortStatus::active) continue;
    const int remaining = cfg.max_n(c) - st.data.n(c);
    if (horizon > remaining)
      throw HttpError{422, "horizon_exceeds_capacity",
                      fmt::format("horizon {} exceeds the remaining capacity {} of cohort {}", horizon, remaining,
                                  static_cast<int>(c)),
                      {{"cohort", static_cast<int>(c)}, {"remaining", remaining}}};
    span[static_cast<std::size_t>(index_of(c))] = horizon;
  }
  const RuleEvaluator ev(cfg);
  json cells = json::array();
  for (int j1 = 0; j1 <= span[0]; ++j1) {
    json row = json::array();
    for (int j2 = 0; j2 <= span[1]; ++j2) {
      TrialState proj = st;
      proj.data.n1 += span[0];
      proj.data.k1 += j1;
      proj.data.n2 += span[1];
      proj.data.k2 += j2;
      for (Cohort c : {Cohort::one, Cohort::two}) {
        auto& s = proj.status[static_cast<std::size_t>(index_of(c))];
        if (s == CohortStatus::active && proj.data.n(c) >= cfg.max_n(c)) s = CohortStatus::completed;
      }
      row.push_back({{"j1", j1},
                     {"j2", j2},
                     {"state", {{"n1", proj.data.n1}, {"k1", proj.data.k1}, {"n2", proj.data.n2}, {"k2", proj.data.k2}}},
                     {"perCohort", per_cohort(ev, proj)}});
    }
    cells.push_back(std::move(row));
  }
  return {200,
          {{"horizon", horizon},
           {"rule", std::string(to_string(cfg.rule))},
           {"rows", span[0] + 1},
           {"cols", span[1] + 1},
           {"cells", cells}}};
}

Response post_boundary_table(const json& body) {
  io::reject_unknown_keys(body, {"config", "nMax"}, "request");
  const TrialConfig cfg = config_of(body);
  int n_max = std::max(cfg.max_n1, cfg.max_n2);
  if (body.contains("nMax")) {
    if (!body["nMax"].is_number_integer()) throw ValidationError("\"nMax\" must be an integer");
    n_max = body["nMax"].get<int>();
  }
  if (n_max < 1) throw ValidationError("\"nMax\" must be positive");
  return {200, io::to_json(boundary_table(cfg, n_max))};
}

void enforce_oc_cap(const TrialConfig& cfg, const Options& opts) {
  if (std::max(cfg.max_n1, cfg.max_n2) > opts.max_oc_n)
    throw HttpError{413, "too_large", fmt::format("maxN is capped at {} for OC requests", opts.max_oc_n),
                    {{"maxN", std::max(cfg.max_n1, cfg.max_n2)}, {"limit", opts.max_oc_n}}};
}

std::vector<double> number_list(const json& body, const char* key, double fallback) {
  if (!body.contains(key)) return {fallback};
  const json& v = body.at(key);
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array() || v.empty()) throw ValidationError(fmt::format("\"{}\" must be a number or nonempty array", key));
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ValidationError(fmt::format("\"{}\" entries must be numbers", key));
    const double t = x.get<double>();
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError(fmt::format("\"{}\" entries must lie in [0, 1]", key));
    out.push_back(t);
  }
  return out;
}

Response post_oc(const json& body, const Options& opts) {
  io::reject_unknown_keys(body, {"config", "theta1", "theta2", "rules", "calibrateAlpha"}, "request");
  const TrialConfig cfg = config_of(body);
  enforce_oc_cap(cfg, opts);
  const auto t1 = number_list(body, "theta1", cfg.theta01);
  const auto t2 = number_list(body, "theta2", cfg.theta02);
  std::vector<Rule> rules{cfg.rule};
  if (body.contains("rules")) {
    rules.clear();
    for (const auto& r : body.at("rules")) rules.push_back(rule_from_string(r.get<std::string>()));
    if (rules.empty()) throw ValidationError("\"rules\" must not be empty");
  }
  const std::size_t grid = t1.size() * t2.size() * rules.size();
  if (grid > static_cast<std::size_t>(opts.max_oc_grid))
    throw HttpError{413, "too_large", fmt::format("OC grid is capped at {} points", opts.max_oc_grid),
                    {{"gridPoints", grid}, {"limit", opts.max_oc_grid}}};
  std::optional<double> alpha;
  if (body.contains("calibrateAlpha")) alpha = body["calibrateAlpha"].get<double>();
  json rows = json::array();
  for (const auto& row : oc_sweep(cfg, rules, t1, t2, alpha)) rows.push_back(io::to_json(row));
  return {200, {{"rows", rows}}};
}

Response post_calibrate(const json& body, const Options& opts) {
  io::reject_unknown_keys(body, {"config", "targetAlpha", "theta2"}, "request");
  const TrialConfig cfg = config_of(body);
  enforce_oc_cap(cfg, opts);
  const json& target = require_object(body, "targetAlpha");
  if (!target.is_number()) throw ValidationError("\"targetAlpha\" must be a number");
  const double theta2 = body.contains("theta2") ? body["theta2"].get<double>() : cfg.theta02;
  const auto c = calibrate_tau(cfg, target.get<double>(), theta2);
  return {200,
          {{"rule", std::string(to_string(cfg.rule))},
           {"tau", c.tau},
           {"achievedAlpha", c.achieved_alpha},
           {"evaluations", c.evaluations}}};
}

Response get_health() {
  return {200, {{"status", "ok"}, {"name", "tox2"}, {"version", std::string(kVersion)}, {"api", "v1"}}};
}

bool is_json_content_type(std::string_view ct) {
  const auto semi = ct.find(';');
  std::string base(ct.substr(0, semi));
  base.erase(std::remove(base.begin(), base.end(), ' '), base.end());
  std::transform(base.begin(), base.end(), base.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return base == "application/json";
}

}  // namespace

Response handle(std::string_view method, std::string_view path, std::string_view content_type, std::string_view body,
                const Options& opts) {
  try {
    if (path == "/api/v1/health") {
      if (method != "GET") throw HttpError{405, "method_not_allowed", "use GET"};
      return get_health();
    }
    const bool known = path == "/api/v1/decision" || path == "/api/v1/whatif" || path == "/api/v1/boundary-table" ||
                       path == "/api/v1/oc" || path == "/api/v1/calibrate";
    if (!known) throw HttpError{404, "not_found", fmt::format("no endpoint {}", path)};
    if (method != "POST") throw HttpError{405, "method_not_allowed", "use POST"};
    if (!is_json_content_type(content_type))
      throw HttpError{415, "unsupported_media_type", "request body must be application/json",
                      {{"contentType", std::string(content_type)}}};
    json parsed;
    try {
      parsed = json::parse(body);
    } catch (const json::parse_error& e) {
      throw HttpError{400, "malformed_json", "request body is not valid JSON", {{"parser", e.what()}}};
    }
    if (!parsed.is_object()) throw HttpError{400, "malformed_body", "request body must be a JSON object"};
    if (path == "/api/v1/decision") return post_decision(parsed);
    if (path == "/api/v1/whatif") return post_whatif(parsed);
    if (path == "/api/v1/boundary-table") return post_boundary_table(parsed);
    if (path == "/api/v1/oc") return post_oc(parsed, opts);
    return post_calibrate(parsed, opts);
  } catch (const HttpError& e) {
    return error_response(e);
  } catch (const InfeasibleCorrelation& e) {
    return error_response({422, "infeasible_prior", e.what(),
                           {{"rho", e.rho()}, {"feasibleRho", {e.lo(), e.hi()}}}});
  } catch (const InfeasibleCalibration& e) {
    return error_response({422, "infeasible_calibration", e.what(),
                           {{"tauMax", e.tau_max()}, {"alphaAtMax", e.alpha_at_max()}}});
  } catch (const ResourceLimit& e) {
    return error_response({413, "too_large", e.what()});
  } catch (const ValidationError& e) {
    return error_response({400, "invalid_request", e.what()});
  } catch (const json::exception& e) {
    return error_response({400, "invalid_request", e.what()});
  } catch (const StateError& e) {
    return error_response({422, "invalid_state", e.what()});
  } catch (const DomainError& e) {
    return error_response({422, "domain_error", e.what()});
  } catch (const DegeneratePrior& e) {
    return error_response({422, "degenerate_prior", e.what()});
  } catch (const std::exception& e) {
    spdlog::error("internal error on {} {}: {}", method, path, e.what());
    return error_response({500, "internal_error", e.what()});
  }
}

BindAddress parse_bind(std::string_view spec) {
  const auto colon = spec.rfind(':');
  if (colon == std::string_view::npos) throw ValidationError(fmt::format("bind address '{}' is not host:port", spec));
  BindAddress b{std::string(spec.substr(0, colon)), 0};
  if (b.host.empty()) b.host = "127.0.0.1";
  const auto port = spec.substr(colon + 1);
  const auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), b.port);
  if (ec != std::errc() || ptr != port.data() + port.size() || b.port < 0 || b.port > 65535)
    throw ValidationError(fmt::format("invalid port in bind address '{}'", spec));
  return b;
}

void mount(httplib::Server& server, const Options& opts) {
  const auto add_cors = [&opts](httplib::Response& res) {
    if (opts.cors_origin.empty()) return;
    res.set_header("Access-Control-Allow-Origin", opts.cors_origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  };
  const auto dispatch = [&opts, add_cors](const httplib::Request& req, httplib::Response& res) {
    const Response r = handle(req.method, req.path, req.get_header_value("Content-Type"), req.body, opts);
    res.status = r.status;
    add_cors(res);
    res.set_content(r.body.dump(), "application/json");
    spdlog::info("{} {} -> {}", req.method, req.path, r.status);
  };
  server.Get(R"(/api/v1/.*)", dispatch);
  server.Post(R"(/api/v1/.*)", dispatch);
  server.Options(R"(/api/v1/.*)", [add_cors](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    add_cors(res);
  });
}

int serve(const BindAddress& bind, const Options& opts) {
  httplib::Server server;
  mount(server, opts);
  spdlog::info("listening on {}:{}", bind.host, bind.port);
  if (!server.listen(bind.host, bind.port)) {
    spdlog::error("cannot bind {}:{}", bind.host, bind.port);
    return 1;
  }
  return 0;
}

}  // namespace tox2::service
