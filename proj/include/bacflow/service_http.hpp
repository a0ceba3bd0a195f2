#pragma once

// Routes the console API onto a cpp-httplib server.

#include <string>

#include <httplib.h>

#include "bacflow/service.hpp"

namespace bacflow {

inline constexpr const char* kOperatorHeader = "X-Operator-Id";

inline void reply(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

inline void mount(httplib::Server& server, ConsoleService& svc) {
  server.Get(R"(/api/tree/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.tree(req.matches[1]));
  });
  server.Get("/api/graph", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.graph(req.get_param_value("layer")));
  });
  server.Get("/api/flows", [&](const httplib::Request&, httplib::Response& res) { reply(res, svc.flows()); });
  server.Get("/api/delta", [&](const httplib::Request&, httplib::Response& res) { reply(res, svc.delta()); });
  server.Post("/api/delta/confirm", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.confirm(req.body, req.get_header_value(kOperatorHeader)));
  });
  server.Get("/api/anomalies", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.anomalies(req.get_param_value("since")));
  });
  server.Post(R"(/api/anomalies/([^/]+)/ack)", [&](const httplib::Request& req, httplib::Response& res) {
    auto op = req.get_header_value(kOperatorHeader);
    reply(res, svc.acknowledge(req.matches[1], op.empty() ? "anonymous" : op));
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    reply(res, api_error(res.status, res.status == 404 ? "NotFound" : "HttpError", httplib::status_message(res.status)));
  });
}

}  // namespace bacflow
