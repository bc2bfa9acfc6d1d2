#pragma once

// Out-of-band reply listener. Drains device replies from a transport and
// keeps link-health counters; dispatch never waits on it.

#include "moheat/protocol.hpp"
#include "moheat/transport.hpp"

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace moheat {

struct LinkHealth {
    std::uint64_t acks = 0;
    std::uint64_t status_replies = 0;
    std::uint64_t diagnostics = 0;     // corrupt or unexpected frames from the device
    std::optional<protocol::Status> last_status;
    std::string error;                 // set when the transport read failed

    friend bool operator==(const LinkHealth&, const LinkHealth&) = default;
};

class LinkMonitor {
public:
    explicit LinkMonitor(std::shared_ptr<Transport> transport);
    ~LinkMonitor();
    LinkMonitor(const LinkMonitor&) = delete;
    LinkMonitor& operator=(const LinkMonitor&) = delete;

    LinkHealth snapshot() const;
    void stop();

private:
    void run(std::stop_token stop);

    std::shared_ptr<Transport> transport_;
    mutable std::mutex mutex_;
    LinkHealth health_;
    protocol::StreamDecoder decoder_;
    std::jthread worker_;
};

}  // namespace moheat
