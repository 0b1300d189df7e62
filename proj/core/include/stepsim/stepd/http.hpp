#pragma once

#include <memory>
#include <string>

#include "stepsim/stepd/service.hpp"

namespace stepsim::stepd {

/// JSON-over-HTTP front end:
///   POST /participants            {"id": optional}
///   GET  /participants/{id}
///   GET  /trial?participant=&mode=tag|caption|similarity
///   POST /trial/{id}              mode-specific body
///   GET  /chains/{stimulus_id}
///   GET  /export/{chains|captions|judgments}
///   GET  /status
/// Errors answer {"error": reason, "message": text} with 4xx status.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  void listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace stepsim::stepd
