#include "segcurate/review_http.hpp"

#include <httplib.h>

#include <filesystem>
#include <thread>

namespace segcurate {
namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, {{"error", code}, {"message", message}});
}

void send_error(httplib::Response& res, const Error& e) {
  send_error(res, http_status_for(e.code()), to_string(e.code()), e.what());
}

}  // namespace

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownItem: return 404;
    case ErrorCode::NotLeasedToYou: return 403;
    case ErrorCode::AlreadyDecided: return 409;
    case ErrorCode::RubricVerdictMismatch: return 422;
    case ErrorCode::InvalidFraction:
    case ErrorCode::InvalidArgument: return 400;
    default: return 500;
  }
}

struct ReviewHttpServer::Impl {
  ReviewService& service;
  ReviewServerOptions options;
  httplib::Server server;
  std::thread worker;
  int port = -1;

  Impl(ReviewService& s, ReviewServerOptions o) : service(s), options(std::move(o)) { routes(); }

  void routes() {
    server.Get("/api/queue/next", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string reviewer = req.get_param_value("reviewer");
      if (reviewer.empty()) {
        send_error(res, 400, "InvalidArgument", "query parameter 'reviewer' is required");
        return;
      }
      const auto item = service.next_item(reviewer);
      if (!item) {
        res.status = 204;
        return;
      }
      send_json(res, 200, *item);
    });

    server.Post("/api/decision", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object()) {
        send_error(res, 400, "InvalidArgument", "request body must be a JSON object");
        return;
      }
      ReviewDecision decision;
      try {
        decision = body.get<ReviewDecision>();
      } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, "InvalidArgument", std::string("bad decision: ") + e.what());
        return;
      }
      send_json(res, 200, {{"ok", true}, {"decision", service.submit_decision(decision)}});
    });

    server.Get(R"(/api/item/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const auto item = service.item(id);
      if (!item) {
        send_error(res, 404, "UnknownItem", "no review item '" + id + "'");
        return;
      }
      nlohmann::json j = *item;
      j["decisions"] = service.decisions_for(id);
      send_json(res, 200, j);
    });

    server.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, service.progress());
    });

    server.Post("/api/audit", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("fraction") ||
          !body["fraction"].is_number()) {
        send_error(res, 400, "InvalidArgument", "body must be {\"fraction\": number, \"seed\": integer}");
        return;
      }
      const auto seed = body.value("seed", std::uint64_t{0});
      send_json(res, 200, service.sample_audit(body["fraction"].get<double>(), seed));
    });

    server.set_exception_handler(
        [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
          try {
            std::rethrow_exception(ep);
          } catch (const Error& e) {
            send_error(res, e);
          } catch (const std::exception& e) {
            send_error(res, 500, "Internal", e.what());
          }
        });

    mount("/images", options.images_dir);
    mount("/", options.ui_dir);
  }

  void mount(const std::string& prefix, const std::string& dir) {
    if (dir.empty()) return;
    if (!std::filesystem::is_directory(dir)) {
      throw Error(ErrorCode::Io, "static directory '" + dir + "' does not exist");
    }
    server.set_mount_point(prefix, dir);
  }
};

ReviewHttpServer::ReviewHttpServer(ReviewService& service, ReviewServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {}

ReviewHttpServer::~ReviewHttpServer() { stop(); }

int ReviewHttpServer::bind() {
  if (impl_->port >= 0) return impl_->port;
  const auto& o = impl_->options;
  const int port = o.port == 0 ? impl_->server.bind_to_any_port(o.host)
                               : (impl_->server.bind_to_port(o.host, o.port) ? o.port : -1);
  if (port < 0) {
    throw Error(ErrorCode::Io, "cannot bind " + o.host + ":" + std::to_string(o.port));
  }
  impl_->port = port;
  return port;
}

void ReviewHttpServer::serve() {
  if (impl_->port < 0) throw Error(ErrorCode::Io, "server is not bound");
  impl_->server.listen_after_bind();
}

int ReviewHttpServer::start() {
  const int port = bind();
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void ReviewHttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace segcurate
