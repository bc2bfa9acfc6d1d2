#pragma once

// HTTP/1.1 + WebSocket front end for Service (Boost.Beast, one thread per
// connection). WebSocket upgrades on /sessions/{id}/telemetry stream the
// session's telemetry hub.

#include "moheat/service.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace moheat {

class HttpServer {
public:
    /// Binds and listens immediately; port 0 picks a free port. Throws
    /// std::runtime_error when the address cannot be bound.
    HttpServer(Service& service, const std::string& address, std::uint16_t port);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    std::uint16_t port() const;

    /// Starts the accept loop on a background thread.
    void start();
    /// Closes the listener and every open connection, then joins their threads.
    void stop();

    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
};

}  // namespace moheat
