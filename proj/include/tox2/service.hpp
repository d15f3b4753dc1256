#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

namespace httplib {
class Server;
}

namespace tox2::service {

struct Options {
  /// Value of Access-Control-Allow-Origin; empty disables CORS headers.
  std::string cors_origin = "*";
  int max_oc_n = 50;
  int max_oc_grid = 100;
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

/// Request dispatch with no I/O, shared by the HTTP server and tests.
/// Every handler is a pure function of its inputs.
Response handle(std::string_view method, std::string_view path, std::string_view content_type, std::string_view body,
                const Options& opts = {});

struct BindAddress {
  std::string host;
  int port;
};

/// Parses "host:port" or ":port".
BindAddress parse_bind(std::string_view spec);

/// Registers the /api/v1 routes, CORS preflight included, on `server`.
/// `opts` must outlive the server.
void mount(httplib::Server& server, const Options& opts);

/// Blocks serving HTTP until the process exits. Returns 1 when the address
/// cannot be bound.
int serve(const BindAddress& bind, const Options& opts);

}  // namespace tox2::service
