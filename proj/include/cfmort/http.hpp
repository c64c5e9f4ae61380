#pragma once

#include <string>

#include <httplib.h>

#include "cfmort/service.hpp"

namespace cfmort {

inline void send(httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_content(r.body, "application/json");
}

/// Registers the /api routes, CORS handling and, if given, a static asset directory at "/".
inline void mount_routes(httplib::Server& server, Service& service, const std::string& static_dir = "") {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Expose-Headers", "X-Cache"}});
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/api/runs", [&](const httplib::Request&, httplib::Response& res) { send(res, service.runs()); });
    server.Get("/api/models", [&](const httplib::Request&, httplib::Response& res) { send(res, service.models()); });
    server.Get(R"(/api/series/([^/]+))",
               [&](const httplib::Request& req, httplib::Response& res) { send(res, service.series(req.matches[1])); });
    server.Get("/api/projection", [&](const httplib::Request& req, httplib::Response& res) {
        send(res, service.projection(req.get_param_value("run"), req.get_param_value("family")));
    });
    server.Get("/api/excess", [&](const httplib::Request& req, httplib::Response& res) {
        send(res, service.excess(req.get_param_value("run"), req.get_param_value("family")));
    });
    server.Post("/api/project",
                [&](const httplib::Request& req, httplib::Response& res) { send(res, service.project(req.body)); });
    server.Get(R"(/api/jobs/([^/]+))",
               [&](const httplib::Request& req, httplib::Response& res) { send(res, service.job(req.matches[1])); });

    if (!static_dir.empty() && !server.set_mount_point("/", static_dir))
        fail(ErrorKind::io, "static directory '" + static_dir + "' does not exist");
}

}  // namespace cfmort
