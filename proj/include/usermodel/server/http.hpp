#pragma once

#include <memory>
#include <string>
#include <thread>

#include <json.hpp>

#include "usermodel/error.hpp"
#include "usermodel/server/service.hpp"

namespace usermodel::server {

// HTTP status for an error code (400 for anything unlisted).
int http_status(ErrorCode code);
// {error_code, message}
nlohmann::json error_body(ErrorCode code, const std::string& message);

// JSON REST front end:
//   POST   /api/session                    {ui_condition}
//   POST   /api/session/{id}/chat          {text}
//   GET    /api/session/{id}/usermodel
//   PUT    /api/session/{id}/pin           {attribute, subcategory, mode}
//   DELETE /api/session/{id}/pin/{attribute}
//   POST   /api/session/{id}/regenerate
//   GET    /api/health
// Static files are served from `static_dir` when given.
class HttpServer {
 public:
  explicit HttpServer(SessionService& service, std::string static_dir = {});
  ~HttpServer();

  // Binds and serves on a background thread; port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host, int port);
  // Blocks until stop() is called from another thread or a signal handler.
  void serve(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

}  // namespace usermodel::server
