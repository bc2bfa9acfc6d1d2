#include "moheat/link.hpp"

#include <array>

namespace moheat {

using namespace std::chrono_literals;

LinkMonitor::LinkMonitor(std::shared_ptr<Transport> transport)
    : transport_(std::move(transport)),
      worker_([this](std::stop_token stop) { run(std::move(stop)); }) {}

LinkMonitor::~LinkMonitor() { stop(); }

void LinkMonitor::stop() {
    if (worker_.joinable()) {
        worker_.request_stop();
        worker_.join();
    }
}

LinkHealth LinkMonitor::snapshot() const {
    std::lock_guard lock(mutex_);
    return health_;
}

void LinkMonitor::run(std::stop_token stop) {
    std::array<std::uint8_t, 256> buf{};
    while (!stop.stop_requested()) {
        std::size_t n = 0;
        try {
            n = transport_->read_some(buf, 20ms);
        } catch (const TransportError& e) {
            std::lock_guard lock(mutex_);
            health_.error = e.what();
            return;
        }
        if (n == 0) continue;
        const auto result = decoder_.feed(std::span(buf.data(), n));
        std::lock_guard lock(mutex_);
        health_.diagnostics += result.diagnostics.size();
        for (const auto& m : result.messages) {
            if (std::holds_alternative<protocol::Ack>(m)) {
                ++health_.acks;
            } else if (const auto* s = std::get_if<protocol::Status>(&m)) {
                ++health_.status_replies;
                health_.last_status = *s;
            } else {
                ++health_.diagnostics;
            }
        }
    }
}

}  // namespace moheat
