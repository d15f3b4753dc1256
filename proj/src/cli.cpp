#include "tox2/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tox2/error.hpp"
#include "tox2/io.hpp"
#include "tox2/service.hpp"
#include "tox2/version.hpp"

namespace tox2::cli {

using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<double> p1, p2, ess, rho, theta01, theta02, tau;
  std::optional<int> max_n;
  std::optional<std::string> rule;
  std::optional<std::string> format;
};

struct Sweep {
  std::vector<double> theta1;
  std::vector<double> theta2;
  std::vector<double> ess;
  std::vector<double> rho;
};

/// Everything a subcommand needs after merging the config file with flags.
struct Loaded {
  json config;
  Sweep sweep;
  std::string format = "table";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--p1", o.p1, "prior mean toxicity, cohort 1")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--p2", o.p2, "prior mean toxicity, cohort 2")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--ess", o.ess, "prior effective sample size");
  cmd->add_option("--rho", o.rho, "prior correlation")->check(CLI::Range(-1.0, 1.0));
  cmd->add_option("--theta01", o.theta01, "acceptable toxicity, cohort 1");
  cmd->add_option("--theta02", o.theta02, "acceptable toxicity, cohort 2");
  cmd->add_option("--tau", o.tau, "exceedance cutoff");
  cmd->add_option("--max-n", o.max_n, "maximum enrollment per cohort");
  cmd->add_option("--rule", o.rule, "monitoring rule")->check(CLI::IsMember({"correlated", "independent", "pooled"}));
  cmd->add_option("--format", o.format, "output format")->check(CLI::IsMember({"table", "csv", "json"}));
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot read '{}'", path));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("'{}' is not valid JSON: {}", path, e.what()));
  }
}

std::vector<double> number_array(const json& j, std::string_view what) {
  if (!j.is_array()) throw ValidationError(fmt::format("sweep: \"{}\" must be an array", what));
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ValidationError(fmt::format("sweep: \"{}\" entries must be numbers", what));
    out.push_back(v.get<double>());
  }
  return out;
}

Loaded load(const CommonOptions& o) {
  Loaded l;
  json file = o.config_path.empty() ? json::object() : read_json_file(o.config_path);
  if (!file.is_object()) throw ValidationError("config file must hold a JSON object");
  if (file.contains("sweep")) {
    const json& s = file["sweep"];
    io::reject_unknown_keys(s, {"theta1", "theta2", "ess", "rho"}, "sweep");
    if (s.contains("theta1")) l.sweep.theta1 = number_array(s["theta1"], "theta1");
    if (s.contains("theta2")) l.sweep.theta2 = number_array(s["theta2"], "theta2");
    if (s.contains("ess")) l.sweep.ess = number_array(s["ess"], "ess");
    if (s.contains("rho")) l.sweep.rho = number_array(s["rho"], "rho");
    file.erase("sweep");
  }
  if (file.contains("format")) {
    if (!file["format"].is_string()) throw ValidationError("config: \"format\" must be a string");
    l.format = file["format"].get<std::string>();
    if (l.format != "table" && l.format != "csv" && l.format != "json")
      throw ValidationError(fmt::format("config: unknown format '{}'", l.format));
    file.erase("format");
  }
  if (o.format) l.format = *o.format;
  io::reject_unknown_keys(file, {"theta01", "theta02", "tau", "maxN", "maxN1", "maxN2", "prior", "rule"}, "config");

  json& prior = file["prior"];
  if (prior.is_null()) prior = json::object();
  if (!prior.is_object()) throw ValidationError("config: \"prior\" must be an object");
  const bool raw_alpha = prior.contains("a11");
  const std::pair<const char*, const std::optional<double>*> prior_flags[] = {
      {"p1", &o.p1}, {"p2", &o.p2}, {"ess", &o.ess}, {"rho", &o.rho}};
  for (const auto& [key, flag] : prior_flags) {
    if (!flag->has_value()) continue;
    if (raw_alpha) throw ValidationError(fmt::format("--{} conflicts with an alpha-vector prior in the config", key));
    prior[key] = **flag;
  }
  if (!raw_alpha) {
    const std::pair<const char*, double> defaults[] = {{"p1", 0.2}, {"p2", 0.2}, {"ess", 3.0}, {"rho", 0.5}};
    for (const auto& [key, value] : defaults)
      if (!prior.contains(key)) prior[key] = value;
  }
  if (o.theta01) file["theta01"] = *o.theta01;
  if (o.theta02) file["theta02"] = *o.theta02;
  if (o.tau) file["tau"] = *o.tau;
  if (o.rule) file["rule"] = *o.rule;
  if (o.max_n) {
    file.erase("maxN1");
    file.erase("maxN2");
    file["maxN"] = *o.max_n;
  }
  if (!file.contains("theta01")) file["theta01"] = 0.2;
  if (!file.contains("tau")) file["tau"] = 0.98;
  if (!file.contains("maxN") && !file.contains("maxN1") && !file.contains("maxN2")) file["maxN"] = 20;
  l.config = std::move(file);
  return l;
}

void print_json(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

int cmd_elicit(const CommonOptions& o, std::ostream& out) {
  const Loaded l = load(o);
  const json& prior = l.config["prior"];
  const AlphaVector a = prior.contains("a11") ? io::alpha_from_json(prior) : elicit(io::elicitation_from_json(prior));
  const auto [m1, m2] = marginal_params(a);
  const PriorElicitation s = summarize(a);
  const RhoInterval range = feasible_rho_range(s.p1, s.p2);
  if (l.format == "json") {
    print_json(out, json{{"alpha", io::to_json(a)},
                     {"ess", a.ess()},
                     {"correlation", correlation(a)},
                     {"feasibleRho", {range.lo, range.hi}},
                     {"marginals", {{{"a", m1.a}, {"b", m1.b}, {"mean", m1.mean()}}, {{"a", m2.a}, {"b", m2.b}, {"mean", m2.mean()}}}}});
  } else if (l.format == "csv") {
    out << "a11,a10,a01,a00,ess,correlation,rhoLo,rhoHi\n";
    out << fmt::format("{},{},{},{},{},{},{},{}\n", io::format_number(a.a11), io::format_number(a.a10),
                       io::format_number(a.a01), io::format_number(a.a00), io::format_number(a.ess()),
                       io::format_number(correlation(a)), io::format_number(range.lo), io::format_number(range.hi));
  } else {
    out << fmt::format("alpha          a11={:.6g}  a10={:.6g}  a01={:.6g}  a00={:.6g}\n", a.a11, a.a10, a.a01, a.a00);
    out << fmt::format("ESS            {:.6g}\n", a.ess());
    out << fmt::format("correlation    {:.6g}  (feasible [{:.6g}, {:.6g}])\n", correlation(a), range.lo, range.hi);
    out << fmt::format("cohort 1 prior Be({:.6g}, {:.6g}), mean {:.6g}\n", m1.a, m1.b, m1.mean());
    out << fmt::format("cohort 2 prior Be({:.6g}, {:.6g}), mean {:.6g}\n", m2.a, m2.b, m2.mean());
  }
  return kExitOk;
}

int cmd_boundary(const CommonOptions& o, std::optional<int> n_max, std::ostream& out) {
  const Loaded l = load(o);
  const TrialConfig cfg = io::config_from_json(l.config);
  const BoundaryTable t = boundary_table(cfg, n_max.value_or(std::max(cfg.max_n1, cfg.max_n2)));
  if (l.format == "json")
    print_json(out, io::to_json(t));
  else if (l.format == "csv")
    out << io::boundary_table_csv(t);
  else
    out << io::boundary_table_text(t);
  return kExitOk;
}

int cmd_decide(const CommonOptions& o, const std::string& log_path, std::ostream& out) {
  const Loaded l = load(o);
  const TrialConfig cfg = io::config_from_json(l.config);
  const auto events = io::events_from_json(read_json_file(log_path));
  const RuleEvaluator ev(cfg);
  const TrialState st = replay(ev, events);
  const Decision d = decide(ev, st);
  if (l.format == "json") {
    print_json(out, json{{"rule", std::string(to_string(cfg.rule))},
                     {"events", events.size()},
                     {"state", io::to_json(st)},
                     {"decision", io::to_json(d, st)}});
    return kExitOk;
  }
  if (l.format == "csv") out << "cohort,n,k,status,exceedance,decision\n";
  for (Cohort c : {Cohort::one, Cohort::two}) {
    const auto i = static_cast<std::size_t>(index_of(c));
    const char* verdict = d[i].stop ? "stop" : "continue";
    if (l.format == "csv")
      out << fmt::format("{},{},{},{},{},{}\n", static_cast<int>(c), st.data.n(c), st.data.k(c), to_string(st.status[i]),
                         io::format_number(d[i].exceedance), verdict);
    else
      out << fmt::format("cohort {}: {}/{} toxic, {:<16} P(theta > {}) = {:.6f}  -> {}\n", static_cast<int>(c),
                         st.data.k(c), st.data.n(c), to_string(st.status[i]), cfg.theta0(c), d[i].exceedance, verdict);
  }
  return kExitOk;
}

std::vector<Rule> parse_rules(const std::vector<std::string>& names, Rule fallback) {
  if (names.empty()) return {fallback};
  std::vector<Rule> out;
  for (const auto& n : names) out.push_back(rule_from_string(n));
  return out;
}

void emit_oc(const std::vector<OCRow>& rows, const std::string& format, std::ostream& out) {
  if (format == "json") {
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(io::to_json(r));
    print_json(out, arr);
  } else if (format == "csv") {
    out << io::oc_csv(rows);
  } else {
    out << io::oc_text(rows);
  }
}

struct OcOptions {
  std::vector<double> theta1;
  std::vector<double> theta2;
  std::vector<std::string> rules;
  std::optional<int> figure;
  std::optional<double> calibrate_alpha;
};

int cmd_oc(const CommonOptions& o, const OcOptions& oc, std::ostream& out) {
  const Loaded l = load(o);
  const TrialConfig base = io::config_from_json(l.config);
  if (oc.figure) {
    emit_oc(figure_data(*oc.figure, base, oc.calibrate_alpha), l.format, out);
    return kExitOk;
  }
  const std::vector<double> default_grid{0.1, 0.2, 0.3, 0.4};
  const auto& t1 = !oc.theta1.empty() ? oc.theta1 : !l.sweep.theta1.empty() ? l.sweep.theta1 : default_grid;
  const auto& t2 = !oc.theta2.empty() ? oc.theta2 : !l.sweep.theta2.empty() ? l.sweep.theta2 : default_grid;
  const auto rules = parse_rules(oc.rules, base.rule);
  std::vector<OCRow> rows;
  if (l.sweep.ess.empty() && l.sweep.rho.empty()) {
    rows = oc_sweep(base, rules, t1, t2, oc.calibrate_alpha);
  } else {
    if (!base.elicitation) throw ValidationError("ess/rho sweeps need a prior given as {p1, p2, ess, rho}");
    const auto ess_grid = l.sweep.ess.empty() ? std::vector<double>{base.elicitation->ess} : l.sweep.ess;
    const auto rho_grid = l.sweep.rho.empty() ? std::vector<double>{base.elicitation->rho} : l.sweep.rho;
    for (double ess : ess_grid)
      for (double rho : rho_grid) {
        PriorElicitation e = *base.elicitation;
        e.ess = ess;
        e.rho = rho;
        const auto cfg = TrialConfig::from_elicitation(e, base.theta01, base.theta02, base.tau, base.max_n1,
                                                       base.max_n2, base.rule);
        auto part = oc_sweep(cfg, rules, t1, t2, oc.calibrate_alpha);
        rows.insert(rows.end(), part.begin(), part.end());
      }
  }
  emit_oc(rows, l.format, out);
  return kExitOk;
}

int cmd_calibrate(const CommonOptions& o, double target, std::optional<double> theta2, std::ostream& out) {
  const Loaded l = load(o);
  const TrialConfig cfg = io::config_from_json(l.config);
  const auto c = calibrate_tau(cfg, target, theta2.value_or(cfg.theta02));
  if (l.format == "json")
    print_json(out, json{{"rule", std::string(to_string(cfg.rule))},
                     {"targetAlpha", target},
                     {"tau", c.tau},
                     {"achievedAlpha", c.achieved_alpha},
                     {"evaluations", c.evaluations}});
  else if (l.format == "csv")
    out << "rule,targetAlpha,tau,achievedAlpha\n"
        << fmt::format("{},{},{},{}\n", to_string(cfg.rule), io::format_number(target), io::format_number(c.tau),
                       io::format_number(c.achieved_alpha));
  else
    out << fmt::format("{} rule: tau = {:.4f} gives type I error {:.6f} (target {}, {} evaluations)\n",
                       to_string(cfg.rule), c.tau, c.achieved_alpha, target, c.evaluations);
  return kExitOk;
}

struct SimOptions {
  double theta1 = 0.2;
  double theta2 = 0.2;
  std::int64_t reps = 100000;
  std::uint64_t seed = 1;
  unsigned workers = 0;
};

int cmd_simulate(const CommonOptions& o, const SimOptions& s, std::ostream& out) {
  const Loaded l = load(o);
  const TrialConfig cfg = io::config_from_json(l.config);
  const unsigned workers = s.workers ? s.workers : std::max(1u, std::thread::hardware_concurrency());
  const auto mc = mc_simulate(cfg, {s.theta1, s.theta2}, s.reps, s.seed, workers);
  if (l.format == "json") {
    print_json(out, json{{"rule", std::string(to_string(cfg.rule))},
                     {"theta1", s.theta1},
                     {"theta2", s.theta2},
                     {"reps", mc.reps},
                     {"seed", s.seed},
                     {"mean", io::to_json(mc.mean)},
                     {"standardError", io::to_json(mc.standard_error)}});
    return kExitOk;
  }
  const json m = io::to_json(mc.mean);
  const json se = io::to_json(mc.standard_error);
  if (l.format == "csv") out << "field,mean,standardError\n";
  for (const auto& [key, value] : m.items()) {
    const std::string mv = value.is_null() ? "NA" : io::format_number(value.get<double>());
    const std::string sv = se[key].is_null() ? "NA" : io::format_number(se[key].get<double>());
    if (l.format == "csv")
      out << fmt::format("{},{},{}\n", key, mv, sv);
    else
      out << fmt::format("{:<22}{:>14}  (SE {})\n", key, mv, sv);
  }
  return kExitOk;
}

void configure_logging() {
  spdlog::set_default_logger(spdlog::stderr_color_mt("tox2"));
  const char* level = std::getenv("TOX2_LOG_LEVEL");
  spdlog::set_level(spdlog::level::info);
  if (!level) return;
  const std::string_view v(level);
  if (v == "error")
    spdlog::set_level(spdlog::level::err);
  else if (v == "warn")
    spdlog::set_level(spdlog::level::warn);
  else if (v == "info")
    spdlog::set_level(spdlog::level::info);
  else if (v == "debug")
    spdlog::set_level(spdlog::level::debug);
  else
    spdlog::warn("ignoring TOX2_LOG_LEVEL='{}'", v);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  static const bool logging_ready = (configure_logging(), true);
  (void)logging_ready;

  CLI::App app{"Bayesian toxicity monitoring for two-cohort trials", "tox2"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonOptions common;
  auto* elicit_cmd = app.add_subcommand("elicit", "alpha vector from prior means, ESS and correlation");
  add_common(elicit_cmd, common);

  std::optional<int> n_max;
  auto* boundary_cmd = app.add_subcommand("boundary-table", "cohort-1 stopping boundaries with n1 = n2");
  add_common(boundary_cmd, common);
  boundary_cmd->add_option("--n-max", n_max, "largest n in the table")->check(CLI::Range(1, 1000));

  std::string log_path;
  auto* decide_cmd = app.add_subcommand("decide", "replay an event log and report stop/continue");
  add_common(decide_cmd, common);
  decide_cmd->add_option("--log", log_path, "event log JSON")->required()->check(CLI::ExistingFile);

  OcOptions oc;
  auto* oc_cmd = app.add_subcommand("oc", "exact operating characteristics");
  add_common(oc_cmd, common);
  oc_cmd->add_option("--theta1", oc.theta1, "true toxicity grid, cohort 1")->delimiter(',');
  oc_cmd->add_option("--theta2", oc.theta2, "true toxicity grid, cohort 2")->delimiter(',');
  oc_cmd->add_option("--rules", oc.rules, "rules to evaluate")
      ->delimiter(',')
      ->check(CLI::IsMember({"correlated", "independent", "pooled"}));
  oc_cmd->add_option("--figure", oc.figure, "emit the grid of a published figure")->check(CLI::IsMember({2, 3, 4, 5}));
  oc_cmd->add_option("--calibrate-alpha", oc.calibrate_alpha, "calibrate tau per rule to this type I error");

  double target = 0.1;
  std::optional<double> calib_theta2;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "smallest grid tau meeting a type I error target");
  add_common(calibrate_cmd, common);
  calibrate_cmd->add_option("--target-alpha", target, "type I error target")->required()->check(CLI::Range(0.0, 1.0));
  calibrate_cmd->add_option("--theta2", calib_theta2, "true toxicity of cohort 2 (default theta02)");

  SimOptions sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo operating characteristics");
  add_common(simulate_cmd, common);
  simulate_cmd->add_option("--theta1", sim.theta1, "true toxicity, cohort 1")->check(CLI::Range(0.0, 1.0));
  simulate_cmd->add_option("--theta2", sim.theta2, "true toxicity, cohort 2")->check(CLI::Range(0.0, 1.0));
  simulate_cmd->add_option("--reps", sim.reps, "replicates")->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--seed", sim.seed, "master seed");
  simulate_cmd->add_option("--workers", sim.workers, "worker threads (0: all cores)");

  std::string bind;
  service::Options service_opts;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP JSON API");
  serve_cmd->add_option("--bind", bind, "host:port (default TOX2_BIND or 127.0.0.1:8080)");
  serve_cmd->add_option("--cors-origin", service_opts.cors_origin, "Access-Control-Allow-Origin value");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (elicit_cmd->parsed()) return cmd_elicit(common, out);
    if (boundary_cmd->parsed()) return cmd_boundary(common, n_max, out);
    if (decide_cmd->parsed()) return cmd_decide(common, log_path, out);
    if (oc_cmd->parsed()) return cmd_oc(common, oc, out);
    if (calibrate_cmd->parsed()) return cmd_calibrate(common, target, calib_theta2, out);
    if (simulate_cmd->parsed()) return cmd_simulate(common, sim, out);
    if (serve_cmd->parsed()) {
      if (bind.empty()) {
        const char* env = std::getenv("TOX2_BIND");
        bind = env ? env : "127.0.0.1:8080";
      }
      return service::serve(service::parse_bind(bind), service_opts);
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const StateError& e) {
    err << "error: invalid trial state: " << e.what() << '\n';
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "error: malformed input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitComputation;
  }
  return kExitUsage;
}

}  // namespace tox2::cli
