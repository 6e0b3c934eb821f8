#pragma once

// HTTP routes for ArenaService.
//
//   GET  /api/health
//   GET  /api/pair?mode=standard|topology                 (auth)
//   POST /api/vote {comparison_id, winner}                 (auth)
//   GET  /api/leaderboard?mode=standard|topology
//   POST /api/models {model_id, format, ...}               (auth)
//   POST /api/prompts/{prompt_id}?description=...          (auth, body = image bytes)
//   POST /api/models/{model_id}/assets/{prompt_id}?polygon_count=N&textured=true|false
//                                                          (auth, body = asset bytes)
//   GET  /api/assets/{digest}
//   POST /api/admin/fraud-sweep, /api/admin/recompute      (auth, admin users)

#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "httplib.h"

#include "arena3d/service.hpp"

namespace arena3d {

class HttpServer {
 public:
  explicit HttpServer(ArenaService& service) : service_(service) {
    const int threads = service_.config().threads;
    server_.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    routes();
  }

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  ~HttpServer() { stop(); }

  /// Binds host:port (port 0 picks a free one) and returns the bound port,
  /// or -1 on failure.
  int bind(const std::string& host, int port) {
    if (port == 0) return server_.bind_to_any_port(host);
    return server_.bind_to_port(host, port) ? port : -1;
  }

  /// Serves on a bound socket until stop().
  bool listen() { return server_.listen_after_bind(); }

  /// bind() then serve on a background thread. Returns the bound port.
  int start(const std::string& host, int port) {
    const int bound = bind(host, port);
    if (bound < 0) return bound;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  static void send(httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_content(api.body.dump(), "application/json");
  }

  template <typename F>
  static httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        send(res, f(req));
      } catch (const std::exception& e) {
        send(res, api_error(500, "internal", e.what()));
      }
    };
  }

  void routes() {
    server_.Get("/api/health", guarded([this](const httplib::Request&) { return service_.health(); }));

    server_.Get("/api/pair", guarded([this](const httplib::Request& req) {
                  const std::string mode = req.get_param_value("mode");
                  const auto& header = req.get_header_value("Authorization");
                  return service_.get_pair(req.has_header("Authorization") ? std::optional<std::string_view>(header)
                                                                           : std::nullopt,
                                           mode);
                }));

    server_.Post("/api/vote", guarded([this](const httplib::Request& req) {
                   const auto& header = req.get_header_value("Authorization");
                   return service_.post_vote(
                       req.has_header("Authorization") ? std::optional<std::string_view>(header) : std::nullopt,
                       req.body);
                 }));

    server_.Get("/api/leaderboard", guarded([this](const httplib::Request& req) {
                  return service_.leaderboard(req.get_param_value("mode"));
                }));

    server_.Post("/api/models", guarded([this](const httplib::Request& req) {
                   const auto& header = req.get_header_value("Authorization");
                   return service_.submit_model(
                       req.has_header("Authorization") ? std::optional<std::string_view>(header) : std::nullopt,
                       req.body);
                 }));

    server_.Post(R"(/api/prompts/([^/]+))", guarded([this](const httplib::Request& req) {
                   const auto& header = req.get_header_value("Authorization");
                   std::optional<std::string> description;
                   if (req.has_param("description")) description = req.get_param_value("description");
                   return service_.upload_prompt(
                       req.has_header("Authorization") ? std::optional<std::string_view>(header) : std::nullopt,
                       req.matches[1], req.body, description);
                 }));

    server_.Post(R"(/api/models/([^/]+)/assets/([^/]+))", guarded([this](const httplib::Request& req) {
                   const auto& header = req.get_header_value("Authorization");
                   std::int64_t polygons = 0;
                   if (req.has_param("polygon_count")) {
                     const std::string text = req.get_param_value("polygon_count");
                     char* end = nullptr;
                     polygons = std::strtoll(text.c_str(), &end, 10);
                     if (text.empty() || *end != '\0')
                       return api_error(400, "missing-required-fields", "polygon_count must be an integer");
                   }
                   const bool textured = req.get_param_value("textured") == "true";
                   return service_.upload_asset(
                       req.has_header("Authorization") ? std::optional<std::string_view>(header) : std::nullopt,
                       req.matches[1], req.matches[2], req.body, polygons, textured);
                 }));

    server_.Get(R"(/api/assets/([0-9a-f]{64}))", [this](const httplib::Request& req, httplib::Response& res) {
      if (auto bytes = service_.blob(req.matches[1].str())) {
        res.set_header("Cache-Control", "public, max-age=31536000, immutable");
        res.set_content(std::move(*bytes), "application/octet-stream");
      } else {
        send(res, api_error(404, "not-found", "no such asset"));
      }
    });

    auto admin = [this](auto job) {
      return guarded([this, job](const httplib::Request& req) {
        const auto& header = req.get_header_value("Authorization");
        const auto h = req.has_header("Authorization") ? std::optional<std::string_view>(header) : std::nullopt;
        if (!h || !bearer_token(*h)) return api_error(401, "unauthenticated", "valid bearer token required");
        if (!service_.is_admin(h)) return api_error(403, "forbidden", "admin only");
        return job();
      });
    };
    server_.Post("/api/admin/fraud-sweep", admin([this] { return service_.run_fraud_sweep_job(); }));
    server_.Post("/api/admin/recompute", admin([this] { return service_.recompute(); }));
  }

  ArenaService& service_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace arena3d
