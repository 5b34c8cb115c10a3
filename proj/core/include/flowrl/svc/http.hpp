#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "flowrl/svc/annotation.hpp"

namespace flowrl::svc {

/// HTTP front end for AnnotationService.
///
///   GET  /api/tasks/next?rater=ID       200 {"task": {...} | null}
///   GET  /api/tasks/<id>                200 task, 404
///   POST /api/annotations               201 record; 400, 401, 404, 409, 422 {"error", ...}
///   GET  /api/annotations?task=ID       200 [records]
///   GET  /api/progress                  200 counts
///   GET  /files/...                     candidate artifacts from static_dir
class AnnotationServer {
 public:
  AnnotationServer(AnnotationService& service, std::filesystem::path static_dir = {});
  ~AnnotationServer();

  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace flowrl::svc
