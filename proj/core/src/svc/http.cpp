#include "flowrl/svc/http.hpp"

#include <thread>

#include <httplib.h>

namespace flowrl::svc {

using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
  reply(res, status, json{{"error", kind}, {"message", message}});
}

}  // namespace

struct AnnotationServer::Impl {
  AnnotationService& service;
  httplib::Server server;
  std::thread thread;

  Impl(AnnotationService& s, const std::filesystem::path& static_dir) : service(s) {
    if (!static_dir.empty() && !server.set_mount_point("/files", static_dir.string()))
      throw IoError("static directory does not exist: " + static_dir.string());

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const SubmissionError& e) {
        reply(res, 422, e.to_json());
      } catch (const AuthError& e) {
        error(res, 401, "auth", e.what());
      } catch (const NotFoundError& e) {
        error(res, 404, "not_found", e.what());
      } catch (const ConflictError& e) {
        error(res, 409, "conflict", e.what());
      } catch (const json::exception& e) {
        error(res, 400, "bad_request", e.what());
      } catch (const std::exception& e) {
        error(res, 500, "internal", e.what());
      }
    });

    server.Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("rater")) return error(res, 400, "bad_request", "missing query parameter 'rater'");
      auto t = service.next_task(req.get_param_value("rater"));
      reply(res, 200, json{{"task", t ? json(*t) : json(nullptr)}});
    });

    server.Get(R"(/api/tasks/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto t = service.task(req.matches[1]);
      if (!t) return error(res, 404, "not_found", "unknown task '" + std::string(req.matches[1]) + "'");
      reply(res, 200, json(*t));
    });

    server.Post("/api/annotations", [this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object()) return error(res, 400, "bad_request", "body must be a JSON object");
      for (const char* key : {"rater", "task", "rankings"})
        if (!body.contains(key)) return error(res, 400, "bad_request", std::string("missing field '") + key + "'");
      const auto& rk = body.at("rankings");
      if (!rk.is_object()) return error(res, 400, "bad_request", "'rankings' must be an object with pf, c, o");
      Rankings r;
      std::map<std::string, SubmissionError::Field> missing;
      auto field = [&](const char* k, std::string& out) {
        if (rk.contains(k) && rk.at(k).is_string()) {
          out = rk.at(k).get<std::string>();
        } else {
          missing[k] = {"missing", std::string("ranking '") + k + "' is required"};
        }
      };
      field("pf", r.pf);
      field("c", r.c);
      field("o", r.o);
      if (!missing.empty()) throw SubmissionError(std::move(missing));
      const auto task_id =
          body.at("task").is_string() ? body.at("task").get<std::string>() : body.at("task").dump();
      const auto result = service.submit(body.at("rater").get<std::string>(), task_id, r);
      json agreement = json::object();
      for (const auto& [d, ok] : result.agreement) agreement[bench::to_string(d)] = ok;
      reply(res, 201, json{{"record", result.record}, {"status", to_string(result.status)}, {"agreement", agreement}});
    });

    server.Get("/api/annotations", [this](const httplib::Request& req, httplib::Response& res) {
      reply(res, 200, json(service.records(req.has_param("task") ? req.get_param_value("task") : "")));
    });

    server.Get("/api/progress",
               [this](const httplib::Request&, httplib::Response& res) { reply(res, 200, service.progress()); });
  }
};

AnnotationServer::AnnotationServer(AnnotationService& service, std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>(service, static_dir)) {}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void AnnotationServer::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void AnnotationServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace flowrl::svc
