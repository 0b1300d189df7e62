#include "stepsim/stepd/http.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace stepsim::stepd {

using nlohmann::json;

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  explicit Impl(Service& s) : service(s) {}
};

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump() + "\n", "application/json");
}

void fail(httplib::Response& res, int status, const std::string& reason, const std::string& message) {
  reply(res, status, json{{"error", reason}, {"message", message}});
}

template <class F>
auto guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      fail(res, e.http_status(), e.reason(), e.what());
    } catch (const ValidationError& e) {
      fail(res, 422, "validation", e.what());
    } catch (const json::exception& e) {
      fail(res, 400, "bad-json", e.what());
    } catch (const std::exception& e) {
      spdlog::error("{} {}: {}", req.method, req.path, e.what());
      fail(res, 500, "internal", e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

}  // namespace

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  Service& svc = impl_->service;

  srv.Post("/participants", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    std::optional<std::string> id;
    if (body.contains("id") && !body["id"].is_null()) id = body["id"].get<std::string>();
    bool created = false;
    const std::string pid = svc.register_participant(id, &created);
    reply(res, created ? 201 : 200, svc.participant(pid));
  }));

  srv.Get(R"(/participants/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, 200, svc.participant(req.matches[1]));
  }));

  srv.Get("/trial", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("participant") || !req.has_param("mode"))
      throw ServiceError(ServiceError::Code::validation, "missing-parameter", "participant and mode are required");
    reply(res, 200, svc.next_trial(req.get_param_value("participant"), parse_mode(req.get_param_value("mode"))));
  }));

  srv.Post(R"(/trial/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, 200, svc.submit(req.matches[1], parse_body(req)));
  }));

  srv.Get(R"(/chains/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, 200, svc.chain(req.matches[1]));
  }));

  srv.Get(R"(/export/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto kind = parse_export_kind(std::string(req.matches[1]));
    res.status = 200;
    res.set_content(svc.export_text(kind), kind == ExportKind::chains ? "application/json" : "text/csv");
  }));

  srv.Get("/status", guarded([&svc](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, svc.status());
  }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw Error("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace stepsim::stepd
