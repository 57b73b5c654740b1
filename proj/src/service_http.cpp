#include <httplib.h>

#include "coldstart/error.hpp"
#include "coldstart/service.hpp"

namespace coldstart {

namespace {

using nlohmann::json;

void send(httplib::Response& res, const ServiceResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json; charset=utf-8");
}

// Empty bodies count as {}; anything else must parse.
bool parse_body(const httplib::Request& req, httplib::Response& res, json& out) {
  if (req.body.empty()) {
    out = json::object();
    return true;
  }
  try {
    out = json::parse(req.body);
    return true;
  } catch (const json::parse_error&) {
    send(res, {400, {{"error", "request body is not valid JSON"}}});
    return false;
  }
}

}  // namespace

struct HttpFrontend::Impl {
  httplib::Server server;
};

HttpFrontend::HttpFrontend(InterviewService& service, std::string cors_origin) : impl_(std::make_unique<Impl>()) {
  httplib::Server& s = impl_->server;
  s.set_default_headers({{"Access-Control-Allow-Origin", cors_origin},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                         {"Access-Control-Allow-Headers", "Content-Type"}});
  s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  s.Get("/api/health", [&service](const httplib::Request&, httplib::Response& res) { send(res, service.health()); });
  s.Post("/api/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (parse_body(req, res, body)) send(res, service.create_session(body));
  });
  s.Post(R"(/api/sessions/([^/]+)/answer)", [&service](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (parse_body(req, res, body)) send(res, service.answer(req.matches[1], body));
  });
  s.Get(R"(/api/sessions/([^/]+)/recommendations)", [&service](const httplib::Request& req, httplib::Response& res) {
    int n = 10;
    if (req.has_param("n")) {
      const std::string text = req.get_param_value("n");
      std::size_t used = 0;
      try {
        n = std::stoi(text, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != text.size()) {
        send(res, {400, {{"error", "n must be a positive integer"}}});
        return;
      }
    }
    send(res, service.recommendations(req.matches[1], n));
  });
  s.Get(R"(/api/sessions/([^/]+)/q_values)", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.q_values(req.matches[1]));
  });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    send(res, {500, {{"error", message}}});
  });
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpFrontend::listen() { impl_->server.listen_after_bind(); }

void HttpFrontend::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace coldstart
