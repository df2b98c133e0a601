#pragma once

#include <memory>
#include <string>

#include "convad/server/service.hpp"

namespace httplib {
class Server;
}

namespace convad::server {

/// REST front end over an InferenceService.
class ApiServer {
public:
    ApiServer(const InferenceService& service, SessionConfig cfg);
    ~ApiServer();

    /// Blocks until stop().
    bool listen();
    /// Binds an ephemeral port on cfg.host and returns it; serve with listen_after_bind().
    int bind_to_any_port();
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

private:
    void routes();

    const InferenceService& service_;
    SessionConfig cfg_;
    std::unique_ptr<httplib::Server> http_;
};

}  // namespace convad::server
