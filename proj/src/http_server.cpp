#include "moheat/http_server.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <poll.h>
#include <sys/socket.h>

#include <atomic>
#include <list>
#include <mutex>
#include <thread>

namespace moheat {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using namespace std::chrono_literals;

namespace {

constexpr std::size_t kMaxBody = 1 << 20;

struct Connection {
    explicit Connection(tcp::socket s) : socket(std::move(s)) {}
    tcp::socket socket;
    std::thread thread;
    std::atomic<bool> finished{false};
};

http::response<http::string_body> make_response(int status, unsigned version, bool keep_alive,
                                                std::string body) {
    http::response<http::string_body> res{static_cast<http::status>(status), version};
    res.set(http::field::server, "moheat");
    if (!body.empty()) res.set(http::field::content_type, "application/json");
    res.keep_alive(keep_alive);
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
}

}  // namespace

struct HttpServer::Impl {
    Service& service;
    asio::io_context ioc;
    tcp::acceptor acceptor{ioc};
    std::atomic<bool> stopping{false};
    std::thread accept_thread;
    std::mutex mutex;
    std::list<std::unique_ptr<Connection>> connections;

    explicit Impl(Service& s) : service(s) {}

    void accept_loop() {
        while (!stopping) {
            pollfd pfd{acceptor.native_handle(), POLLIN, 0};
            if (::poll(&pfd, 1, 100) <= 0) continue;
            tcp::socket socket(ioc);
            beast::error_code ec;
            acceptor.accept(socket, ec);
            if (ec) continue;
            std::lock_guard lock(mutex);
            reap();
            auto conn = std::make_unique<Connection>(std::move(socket));
            Connection* raw = conn.get();
            conn->thread = std::thread([this, raw] {
                serve(raw->socket);
                raw->finished = true;
            });
            connections.push_back(std::move(conn));
        }
    }

    // Joins connection threads that have finished. Caller holds `mutex`.
    void reap() {
        for (auto it = connections.begin(); it != connections.end();) {
            if ((*it)->finished) {
                (*it)->thread.join();
                it = connections.erase(it);
            } else {
                ++it;
            }
        }
    }

    void serve(tcp::socket& socket) {
        beast::flat_buffer buffer;
        beast::error_code ec;
        for (;;) {
            http::request_parser<http::string_body> parser;
            parser.body_limit(kMaxBody);
            http::read(socket, buffer, parser, ec);
            if (ec == http::error::body_limit) {
                const ServiceError too_big(413, "payload_too_large", "request body over 1 MiB");
                http::write(socket, make_response(413, 11, false, canonical_dump(too_big.to_json())),
                            ec);
                break;
            }
            if (ec) break;
            auto req = parser.release();
            if (websocket::is_upgrade(req)) {
                telemetry(socket, std::move(req));
                break;
            }
            const Response r =
                service.handle(std::string(req.method_string()), std::string(req.target()), req.body());
            http::write(socket, make_response(r.status, req.version(), req.keep_alive(), r.text()), ec);
            if (ec || !req.keep_alive()) break;
        }
        socket.shutdown(tcp::socket::shutdown_both, ec);
        socket.close(ec);
    }

    void telemetry(tcp::socket& socket, http::request<http::string_body> req) {
        beast::error_code ec;
        std::shared_ptr<TelemetryHub> hub;
        try {
            const auto seg = split_target(std::string(req.target()));
            if (seg.size() == 3 && seg[0] == "sessions" && seg[2] == "telemetry") {
                hub = service.telemetry(seg[1]);
            }
        } catch (const ServiceError&) {
        }
        if (!hub) {
            const ServiceError nf(404, "not_found", "no telemetry stream at " + std::string(req.target()));
            http::write(socket, make_response(404, req.version(), false, canonical_dump(nf.to_json())), ec);
            return;
        }

        websocket::stream<tcp::socket&> ws(socket);
        ws.accept(req, ec);
        if (ec) return;
        ws.text(true);
        auto cursor = hub->subscribe();
        std::string message;
        for (;;) {
            switch (hub->pull(cursor, message, 200ms)) {
                case TelemetryHub::Pull::message:
                    ws.write(asio::buffer(message), ec);
                    if (ec) return;
                    break;
                case TelemetryHub::Pull::closed:
                    ws.close(websocket::close_code::normal, ec);
                    return;
                case TelemetryHub::Pull::dropped:
                    ws.close({websocket::close_code::policy_error, "subscriber too slow"}, ec);
                    return;
                case TelemetryHub::Pull::timeout:
                    if (stopping) {
                        ws.close(websocket::close_code::going_away, ec);
                        return;
                    }
                    break;
            }
        }
    }
};

HttpServer::HttpServer(Service& service, const std::string& address, std::uint16_t port)
    : impl_(std::make_unique<Impl>(service)) {
    beast::error_code ec;
    const auto addr = asio::ip::make_address(address, ec);
    if (ec) throw std::runtime_error("bad listen address " + address + ": " + ec.message());
    const tcp::endpoint ep{addr, port};
    auto& a = impl_->acceptor;
    a.open(ep.protocol(), ec);
    if (!ec) a.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) a.bind(ep, ec);
    if (!ec) a.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) {
        throw std::runtime_error("cannot listen on " + address + ":" + std::to_string(port) + ": " +
                                 ec.message());
    }
}

HttpServer::~HttpServer() { stop(); }

std::uint16_t HttpServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void HttpServer::start() {
    impl_->accept_thread = std::thread([this] { impl_->accept_loop(); });
}

void HttpServer::stop() {
    auto& im = *impl_;
    if (im.stopping.exchange(true)) return;
    if (im.accept_thread.joinable()) im.accept_thread.join();
    beast::error_code ec;
    im.acceptor.close(ec);
    std::lock_guard lock(im.mutex);
    for (auto& c : im.connections) {
        // Wakes blocking reads; WebSocket writers notice `stopping` on their next poll.
        ::shutdown(c->socket.native_handle(), SHUT_RDWR);
    }
    for (auto& c : im.connections) c->thread.join();
    im.connections.clear();
}

}  // namespace moheat
