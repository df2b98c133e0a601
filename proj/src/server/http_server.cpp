#include "convad/server/http_server.hpp"

#include "httplib.h"

namespace convad::server {
namespace {

void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

int int_param(const httplib::Request& req, const std::string& name, int fallback) {
    if (!req.has_param(name)) return fallback;
    try {
        return std::stoi(req.get_param_value(name));
    } catch (const std::exception&) {
        throw BadRequest("query parameter " + name + " must be an integer");
    }
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
    return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const NotFound& e) {
            send_json(res, {{"error", e.what()}}, 404);
        } catch (const BadRequest& e) {
            send_json(res, {{"error", e.what()}}, 400);
        } catch (const std::exception& e) {
            send_json(res, {{"error", e.what()}}, 500);
        }
    };
}

}  // namespace

ApiServer::ApiServer(const InferenceService& service, SessionConfig cfg)
    : service_(service), cfg_(std::move(cfg)), http_(std::make_unique<httplib::Server>()) {
    routes();
}

ApiServer::~ApiServer() { stop(); }

void ApiServer::routes() {
    auto& s = *http_;
    s.set_default_headers({{"Access-Control-Allow-Origin", cfg_.cors_origin},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
    s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    s.Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
              send_json(res, service_.health());
          }));
    s.Get("/api/meta", guarded([this](const httplib::Request&, httplib::Response& res) {
              send_json(res, service_.meta());
          }));
    s.Get("/api/samples", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string split = req.has_param("split") ? req.get_param_value("split") : "test";
              send_json(res, service_.list_samples(split, int_param(req, "offset", 0),
                                                   int_param(req, "limit", cfg_.default_page_size)));
          }));
    s.Get(R"(/api/samples/([^/]+)/prediction)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              send_json(res, service_.prediction(req.matches[1]));
          }));
    s.Post(R"(/api/samples/([^/]+)/intervene)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               nlohmann::json body;
               try {
                   body = nlohmann::json::parse(req.body);
               } catch (const nlohmann::json::exception& e) {
                   throw BadRequest(std::string("request body is not JSON: ") + e.what());
               }
               send_json(res, service_.intervene(req.matches[1], body));
           }));
    s.Get(R"(/api/samples/([^/]+)/image\.png)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              res.set_content(service_.image_png(req.matches[1]), "image/png");
          }));
    s.Get(R"(/api/samples/([^/]+)/anomaly_map\.png)",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
              res.set_content(service_.anomaly_map_png(req.matches[1]), "image/png");
          }));
    s.Get(R"(/api/samples/([^/]+)/anomaly_map\.json)",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
              send_json(res, service_.anomaly_map_raw(req.matches[1]));
          }));
}

bool ApiServer::listen() { return http_->listen(cfg_.host, cfg_.port); }

int ApiServer::bind_to_any_port() { return http_->bind_to_any_port(cfg_.host); }

bool ApiServer::listen_after_bind() { return http_->listen_after_bind(); }

void ApiServer::stop() {
    if (http_) http_->stop();
}

void ApiServer::wait_until_ready() const { http_->wait_until_ready(); }

}  // namespace convad::server
