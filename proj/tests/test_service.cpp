#include <doctest.h>

#include <boost/math/special_functions/beta.hpp>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "tox2/cli.hpp"
#include "tox2/service.hpp"

using nlohmann::json;
using tox2::service::handle;
using tox2::service::Response;

namespace {

const json kConfig = json::parse(R"({"theta01":0.2,"theta02":0.2,"tau":0.98,"maxN":20,
    "prior":{"p1":0.2,"p2":0.2,"ess":3,"rho":0.5},"rule":"correlated"})");

Response post(std::string_view path, const json& body) {
  return handle("POST", path, "application/json", body.dump());
}

json state(int n1, int k1, int n2, int k2) { return {{"n1", n1}, {"k1", k1}, {"n2", n2}, {"k2", k2}}; }

void check_error_shape(const Response& r) {
  CHECK(r.body.contains("code"));
  CHECK(r.body["code"].is_string());
  CHECK(r.body["message"].is_string());
  CHECK(r.body["details"].is_object());
}

}  // namespace

TEST_CASE("health") {
  const auto r = handle("GET", "/api/v1/health", "", "");
  CHECK(r.status == 200);
  CHECK(r.body["status"] == "ok");
  CHECK(r.body["version"] == "0.1.0");
  CHECK(handle("POST", "/api/v1/health", "application/json", "{}").status == 405);
}

TEST_CASE("decision endpoint") {
  auto r = post("/api/v1/decision", {{"config", kConfig}, {"state", state(6, 5, 6, 0)}});
  REQUIRE(r.status == 200);
  CHECK(r.body["rule"] == "correlated");
  CHECK(r.body["perCohort"][0]["stop"] == true);
  CHECK(r.body["perCohort"][0]["boundaryK"] == 5);
  CHECK(r.body["perCohort"][1]["stop"] == false);
  for (const char* rule : {"correlated", "independent", "pooled"})
    CHECK(r.body["ruleComparison"][rule].size() == 2);
  CHECK(r.body["ruleComparison"]["correlated"] == r.body["perCohort"]);

  r = post("/api/v1/decision", {{"config", kConfig}, {"state", state(0, 0, 0, 0)}});
  REQUIRE(r.status == 200);
  const double prior_survival = boost::math::ibetac(0.6, 2.4, 0.2);
  for (const auto& [rule, cohorts] : r.body["ruleComparison"].items())
    for (const auto& c : cohorts) {
      CHECK(c["stop"] == false);
      CAPTURE(rule);
      CHECK(c["exceedance"].get<double>() == doctest::Approx(prior_survival).epsilon(1e-12));
    }
  // The state is optional and defaults to an empty trial.
  CHECK(post("/api/v1/decision", {{"config", kConfig}}).body == r.body);

  auto bad = kConfig;
  bad["prior"]["rho"] = -0.9;
  r = post("/api/v1/decision", {{"config", bad}});
  CHECK(r.status == 422);
  CHECK(r.body["code"] == "infeasible_prior");
  CHECK(r.body["details"]["feasibleRho"][0].get<double>() == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(r.body["details"]["feasibleRho"][1].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  check_error_shape(r);
}

TEST_CASE("decision matches the CLI") {
  const auto dir = std::filesystem::temp_directory_path() / ("tox2_svc_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto cfg_path = (dir / "cfg.json").string();
  const auto log_path = (dir / "log.json").string();
  std::ofstream(cfg_path) << kConfig.dump();
  json events = json::array();
  for (int i = 0; i < 4; ++i) {
    events.push_back({{"seq", 2 * i + 1}, {"cohort", 1}, {"toxic", i % 2 == 0}});
    events.push_back({{"seq", 2 * i + 2}, {"cohort", 2}, {"toxic", i == 3}});
  }
  std::ofstream(log_path) << events.dump();
  std::ostringstream out, err;
  REQUIRE(tox2::cli::run({"decide", "--config", cfg_path, "--log", log_path, "--format", "json"}, out, err) == 0);
  std::filesystem::remove_all(dir);
  const auto cli = json::parse(out.str());

  const auto r = post("/api/v1/decision", {{"config", kConfig}, {"state", cli["state"]}});
  REQUIRE(r.status == 200);
  for (int i = 0; i < 2; ++i) {
    CHECK(r.body["perCohort"][i]["exceedance"] == cli["decision"][i]["exceedance"]);
    CHECK(r.body["perCohort"][i]["stop"] == cli["decision"][i]["stop"]);
  }
}

TEST_CASE("whatif endpoint") {
  auto r = post("/api/v1/whatif", {{"config", kConfig}, {"state", state(5, 4, 5, 0)}, {"horizon", 1}});
  REQUIRE(r.status == 200);
  CHECK(r.body["rows"] == 2);
  CHECK(r.body["cols"] == 2);
  const auto& cell = r.body["cells"][1][0];
  CHECK(cell["j1"] == 1);
  CHECK(cell["j2"] == 0);
  CHECK(cell["state"] == state(6, 5, 6, 0));
  CHECK(cell["perCohort"][0]["stop"] == true);
  CHECK(r.body["cells"][0][0]["perCohort"][0]["stop"] == false);

  r = post("/api/v1/whatif", {{"config", kConfig}, {"state", state(3, 1, 4, 2)}, {"horizon", 0}});
  REQUIRE(r.status == 200);
  CHECK(r.body["rows"] == 1);
  CHECK(r.body["cols"] == 1);
  const auto d = post("/api/v1/decision", {{"config", kConfig}, {"state", state(3, 1, 4, 2)}});
  CHECK(r.body["cells"][0][0]["perCohort"] == d.body["perCohort"]);

  for (int h : {2, 3, 5}) {
    r = post("/api/v1/whatif", {{"config", kConfig}, {"state", state(2, 0, 2, 0)}, {"horizon", h}});
    REQUIRE(r.status == 200);
    CHECK(r.body["cells"].size() == static_cast<std::size_t>(h + 1));
    for (const auto& row : r.body["cells"]) CHECK(row.size() == static_cast<std::size_t>(h + 1));
  }

  // A stopped cohort does not project; its axis collapses to one column.
  json stopped = state(4, 1, 5, 4);
  stopped["status2"] = "stopped_toxicity";
  r = post("/api/v1/whatif", {{"config", kConfig}, {"state", stopped}, {"horizon", 2}});
  REQUIRE(r.status == 200);
  CHECK(r.body["rows"] == 3);
  CHECK(r.body["cols"] == 1);
  CHECK(r.body["cells"][2][0]["state"] == state(6, 3, 5, 4));

  r = post("/api/v1/whatif", {{"config", kConfig}, {"state", state(18, 0, 19, 0)}, {"horizon", 2}});
  REQUIRE(r.status == 422);
  CHECK(r.body["code"] == "horizon_exceeds_capacity");
  check_error_shape(r);
  // Reaching the cap marks the projected cohort completed.
  r = post("/api/v1/whatif", {{"config", kConfig}, {"state", state(19, 0, 19, 0)}, {"horizon", 1}});
  REQUIRE(r.status == 200);
  CHECK(r.body["cells"][1][1]["perCohort"][0]["status"] == "completed");
  CHECK(r.body["cells"][1][1]["perCohort"][0]["stop"] == false);

  CHECK(post("/api/v1/whatif", {{"config", kConfig}, {"state", state(0, 0, 0, 0)}, {"horizon", -1}}).status == 400);
  CHECK(post("/api/v1/whatif", {{"config", kConfig}, {"state", state(0, 0, 0, 0)}}).status == 400);
}

TEST_CASE("boundary-table endpoint matches the CLI CSV") {
  auto cfg = kConfig;
  cfg["maxN"] = 10;
  const auto r = post("/api/v1/boundary-table", {{"config", cfg}});
  REQUIRE(r.status == 200);
  CHECK(r.body["nMax"] == 10);
  CHECK(r.body["rows"][0]["cells"] == json::parse(R"(["none","none","none",4,4,5,5,6,6,6])"));

  std::ostringstream out, err;
  REQUIRE(tox2::cli::run({"boundary-table", "--max-n", "10", "--format", "json"}, out, err) == 0);
  CHECK(json::parse(out.str()) == r.body);

  CHECK(post("/api/v1/boundary-table", {{"config", kConfig}, {"nMax", 0}}).status == 400);
  CHECK(post("/api/v1/boundary-table", {{"config", kConfig}, {"nMax", 4}}).body["rows"].size() == 5);
}

TEST_CASE("oc and calibrate endpoints") {
  auto cfg = kConfig;
  cfg["maxN"] = 10;
  auto r = post("/api/v1/oc", {{"config", cfg},
                               {"theta1", {0.1, 0.3}},
                               {"theta2", 0.2},
                               {"rules", {"independent", "pooled"}}});
  REQUIRE(r.status == 200);
  CHECK(r.body["rows"].size() == 4);
  CHECK(r.body["rows"][0].contains("stopProb1"));

  cfg["maxN"] = 200;
  r = post("/api/v1/oc", {{"config", cfg}});
  CHECK(r.status == 413);
  check_error_shape(r);
  cfg["maxN"] = 10;
  json grid = json::array();
  for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
  r = post("/api/v1/oc", {{"config", cfg}, {"theta1", grid}, {"theta2", grid}});
  CHECK(r.status == 413);
  CHECK(post("/api/v1/oc", {{"config", cfg}, {"theta1", {1.5}}}).status == 400);

  r = post("/api/v1/calibrate", {{"config", cfg}, {"targetAlpha", 0.1}});
  REQUIRE(r.status == 200);
  CHECK(r.body["achievedAlpha"].get<double>() <= 0.1);
  r = post("/api/v1/calibrate", {{"config", cfg}, {"targetAlpha", 1e-15}});
  CHECK(r.status == 422);
  CHECK(r.body["code"] == "infeasible_calibration");
  CHECK(post("/api/v1/calibrate", {{"config", cfg}}).status == 400);
}

TEST_CASE("request errors") {
  auto r = handle("POST", "/api/v1/decision", "application/json", "{not json");
  CHECK(r.status == 400);
  CHECK(r.body["code"] == "malformed_json");
  check_error_shape(r);
  for (const char* path : {"/api/v1/decision", "/api/v1/whatif", "/api/v1/boundary-table", "/api/v1/oc",
                           "/api/v1/calibrate"}) {
    CAPTURE(path);
    CHECK(handle("POST", path, "application/json", "[1,").status == 400);
    CHECK(handle("POST", path, "application/json", "[1,2]").status == 400);
    CHECK(handle("POST", path, "text/plain", "{}").status == 415);
    CHECK(handle("GET", path, "", "").status == 405);
    CHECK(post(path, json::object()).status == 400);
  }
  CHECK(handle("POST", "/api/v1/decision", "application/json; charset=utf-8", json{{"config", kConfig}}.dump())
            .status == 200);
  CHECK(handle("GET", "/api/v1/nope", "", "").status == 404);
  CHECK(post("/api/v1/decision", {{"config", kConfig}, {"extra", 1}}).status == 400);
  r = post("/api/v1/decision", {{"config", kConfig}, {"state", state(21, 0, 0, 0)}});
  CHECK(r.status == 422);
  CHECK(r.body["code"] == "invalid_state");
}

TEST_CASE("responses do not depend on earlier requests") {
  const json a = {{"config", kConfig}, {"state", state(4, 2, 3, 1)}};
  const auto alone = post("/api/v1/decision", a);
  post("/api/v1/decision", {{"config", kConfig}, {"state", state(9, 6, 9, 5)}});
  post("/api/v1/whatif", {{"config", kConfig}, {"state", state(1, 1, 1, 1)}, {"horizon", 3}});
  auto other = kConfig;
  other["rule"] = "pooled";
  post("/api/v1/decision", {{"config", other}, {"state", state(4, 2, 3, 1)}});
  CHECK(post("/api/v1/decision", a).body == alone.body);
}

TEST_CASE("parse_bind") {
  const auto b = tox2::service::parse_bind("0.0.0.0:9000");
  CHECK(b.host == "0.0.0.0");
  CHECK(b.port == 9000);
  CHECK(tox2::service::parse_bind(":81").host == "127.0.0.1");
  CHECK_THROWS(tox2::service::parse_bind("localhost"));
  CHECK_THROWS(tox2::service::parse_bind("h:99999"));
  CHECK_THROWS(tox2::service::parse_bind("h:8x"));
}

TEST_CASE("live HTTP server") {
  tox2::service::Options opts;
  opts.cors_origin = "http://console.local";
  httplib::Server server;
  tox2::service::mount(server, opts);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/api/v1/health");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["status"] == "ok");
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://console.local");

  res = client.Post("/api/v1/decision", json{{"config", kConfig}, {"state", state(6, 5, 6, 0)}}.dump(),
                    "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["perCohort"][0]["stop"] == true);

  res = client.Post("/api/v1/decision", "{oops", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["code"] == "malformed_json");

  res = client.Post("/api/v1/decision", "{}", "text/plain");
  REQUIRE(res);
  CHECK(res->status == 415);

  res = client.Options("/api/v1/decision");
  REQUIRE(res);
  CHECK(res->status == 204);
  CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  // Concurrent clients see the same answers.
  std::vector<std::thread> clients;
  std::vector<std::string> bodies(4);
  for (std::size_t i = 0; i < bodies.size(); ++i)
    clients.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", port);
      auto r = c.Post("/api/v1/whatif", json{{"config", kConfig}, {"state", state(3, 1, 3, 0)}, {"horizon", 2}}.dump(),
                      "application/json");
      if (r) bodies[i] = r->body;
    });
  for (auto& t : clients) t.join();
  for (const auto& b : bodies) CHECK(b == bodies[0]);
  CHECK_FALSE(bodies[0].empty());

  server.stop();
  worker.join();
}
