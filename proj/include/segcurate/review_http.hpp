#pragma once

#include <memory>
#include <string>

#include "segcurate/error.hpp"
#include "segcurate/review.hpp"

namespace segcurate {

struct ReviewServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;          // 0 picks a free port
  std::string ui_dir;       // served at /
  std::string images_dir;   // served at /images
};

// JSON API over a ReviewService:
//   GET  /api/queue/next?reviewer=ID  200 item | 204 no work
//   POST /api/decision                200 | 403 | 404 | 409 | 422
//   GET  /api/item/{id}               200 | 404
//   GET  /api/progress                200
//   POST /api/audit {fraction, seed}  200 | 400
class ReviewHttpServer {
 public:
  ReviewHttpServer(ReviewService& service, ReviewServerOptions options);
  ~ReviewHttpServer();
  ReviewHttpServer(const ReviewHttpServer&) = delete;
  ReviewHttpServer& operator=(const ReviewHttpServer&) = delete;

  // Binds the socket; returns the bound port. Throws Io on failure.
  int bind();
  // Serves until stop() is called. bind() must have succeeded.
  void serve();
  // Binds and serves on a background thread.
  int start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// HTTP status for a review error code.
int http_status_for(ErrorCode code);

}  // namespace segcurate
