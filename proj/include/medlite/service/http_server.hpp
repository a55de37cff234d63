// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>

#include "httplib.h"
#include "json.hpp"
#include "medlite/service/service.hpp"

namespace medlite {

namespace detail {
inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}
}  // namespace detail

// Routes:
//   POST /v1/query    {"text": "..."} -> QueryResponse JSON
//   GET  /v1/metrics  counters
//   GET  /healthz     {"status": "ok"}
// Errors come back as {"error": "..."} with status 400 or 502.
inline void install_routes(httplib::Server& server, MedService& service) {
  server.Post("/v1/query", [&service](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error&) {
      detail::send_json(res, 400, {{"error", "request body must be JSON"}});
      return;
    }
    if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
      detail::send_json(res, 400, {{"error", "request body needs a string field 'text'"}});
      return;
    }
    try {
      detail::send_json(res, 200, to_json(service.handle_query(body["text"].get<std::string>())));
    } catch (const ServiceError& e) {
      detail::send_json(res, e.status(), {{"error", e.what()}});
    } catch (const std::exception& e) {
      detail::send_json(res, 500, {{"error", e.what()}});
    }
  });
  server.Get("/v1/metrics", [&service](const httplib::Request&, httplib::Response& res) {
    detail::send_json(res, 200, service.metrics());
  });
  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    detail::send_json(res, 200, {{"status", "ok"}});
  });
}

inline std::unique_ptr<httplib::Server> make_http_server(MedService& service, std::size_t threads) {
  auto server = std::make_unique<httplib::Server>();
  server->new_task_queue = [threads] { return new httplib::ThreadPool(threads == 0 ? 1 : threads); };
  install_routes(*server, service);
  return server;
}

}  // namespace medlite
