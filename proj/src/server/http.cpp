#include "usermodel/server/http.hpp"

#include <httplib.h>

#include "usermodel/error.hpp"
#include "usermodel/util/io.hpp"

namespace usermodel::server {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSessionNotFound: return 404;
    case ErrorCode::kForbidden: return 403;
    case ErrorCode::kNothingToRegenerate: return 409;
    case ErrorCode::kContextOverflow: return 422;
    case ErrorCode::kServiceUnavailable: return 503;
    case ErrorCode::kMissingProbe:
    case ErrorCode::kZeroNorm: return 500;
    default: return 400;
  }
}

nlohmann::json error_body(ErrorCode code, const std::string& message) {
  return {{"error_code", error_code_name(code)}, {"message", message}};
}

struct HttpServer::Impl {
  SessionService& service;
  httplib::Server http;

  explicit Impl(SessionService& s) : service(s) {}
};

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(util::dump_json(body), "application/json");
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::kParse, "request body must be a JSON object");
  return j;
}

std::string field(const nlohmann::json& j, const char* name) {
  if (!j.contains(name) || !j[name].is_string()) {
    throw Error(ErrorCode::kInvalidArgument, std::string("missing string field '") + name + "'");
  }
  return j[name].get<std::string>();
}

nlohmann::json turn_json(const TurnResult& t) {
  nlohmann::json j{{"reply", t.reply}, {"answer_changed", t.answer_changed}};
  if (t.snapshot) j["snapshot"] = t.snapshot->to_json();
  return j;
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      send_json(res, 200, fn(req));
    } catch (const Error& e) {
      send_json(res, http_status(e.code()), error_body(e.code(), e.what()));
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error_code", "internal"}, {"message", e.what()}});
    }
  };
}

}  // namespace

HttpServer::HttpServer(SessionService& service, std::string static_dir) : impl_(std::make_unique<Impl>(service)) {
  auto& http = impl_->http;
  SessionService& svc = service;

  http.Post("/api/session", guarded([&svc](const httplib::Request& req) {
              const auto body = parse_body(req);
              const auto cond = parse_ui_condition(body.value("ui_condition", std::string("read-only")));
              const auto created = svc.create_session(cond);
              nlohmann::json j{{"session_id", created.session_id}};
              if (created.snapshot) j["snapshot"] = created.snapshot->to_json();
              return j;
            }));
  http.Post(R"(/api/session/([^/]+)/chat)", guarded([&svc](const httplib::Request& req) {
              const auto body = parse_body(req);
              return turn_json(svc.chat(req.matches[1], field(body, "text")));
            }));
  http.Get(R"(/api/session/([^/]+)/usermodel)", guarded([&svc](const httplib::Request& req) {
             const auto view = svc.user_model(req.matches[1]);
             nlohmann::json j{{"pins", pins_json(view.pins)}};
             if (view.snapshot) j["snapshot"] = view.snapshot->to_json();
             return j;
           }));
  http.Put(R"(/api/session/([^/]+)/pin)", guarded([&svc](const httplib::Request& req) {
             const auto body = parse_body(req);
             steering::PinState pin;
             pin.attribute = parse_attribute(field(body, "attribute"));
             pin.subcategory = field(body, "subcategory");
             pin.mode = steering::parse_pin_mode(body.value("mode", std::string("pin-100")));
             return nlohmann::json{{"pins", pins_json(svc.set_pin(req.matches[1], pin))}};
           }));
  http.Delete(R"(/api/session/([^/]+)/pin/([^/]+))", guarded([&svc](const httplib::Request& req) {
                const auto attr = parse_attribute(req.matches[2].str());
                return nlohmann::json{{"pins", pins_json(svc.clear_pin(req.matches[1], attr))}};
              }));
  http.Post(R"(/api/session/([^/]+)/regenerate)", guarded([&svc](const httplib::Request& req) {
              parse_body(req);
              return turn_json(svc.regenerate(req.matches[1]));
            }));
  http.Get("/api/health", guarded([&svc](const httplib::Request&) {
             return nlohmann::json{{"status", svc.probes_loaded() ? "ok" : "no-probes"},
                                   {"model_fingerprint", svc.engine().fingerprint()}};
           }));
  if (!static_dir.empty()) http.set_mount_point("/", static_dir);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  auto& http = impl_->http;
  const int bound = port == 0 ? http.bind_to_any_port(host) : (http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([&http] { http.listen_after_bind(); });
  http.wait_until_ready();
  return bound;
}

void HttpServer::serve(const std::string& host, int port) {
  if (!impl_->http.listen(host, port)) {
    throw Error(ErrorCode::kIo, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

void HttpServer::stop() {
  if (impl_) impl_->http.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace usermodel::server
