#pragma once

#include "moheat/protocol.hpp"
#include "moheat/transport.hpp"

#include <limits>
#include <mutex>
#include <vector>

namespace moheat::testing {

/// Captures every write. Write attempts numbered [fail_from, fail_from + fail_count)
/// throw TransportError.
class RecordingTransport final : public Transport {
public:
    void write(std::span<const std::uint8_t> bytes) override {
        std::lock_guard lock(mutex_);
        const std::size_t attempt = attempts_++;
        if (attempt >= fail_from_ && attempt - fail_from_ < fail_count_) {
            throw TransportError("injected write failure");
        }
        bytes_.insert(bytes_.end(), bytes.begin(), bytes.end());
    }
    std::size_t read_some(std::span<std::uint8_t>, std::chrono::milliseconds) override { return 0; }
    std::string describe() const override { return "recording"; }

    void inject_failures(std::size_t from_attempt,
                         std::size_t count = std::numeric_limits<std::size_t>::max()) {
        std::lock_guard lock(mutex_);
        fail_from_ = from_attempt;
        fail_count_ = count;
    }

    std::vector<std::uint8_t> bytes() const {
        std::lock_guard lock(mutex_);
        return bytes_;
    }

    std::vector<protocol::Message> messages() const {
        return protocol::decode_stream(bytes()).messages;
    }

    std::size_t attempts() const {
        std::lock_guard lock(mutex_);
        return attempts_;
    }

private:
    mutable std::mutex mutex_;
    std::vector<std::uint8_t> bytes_;
    std::size_t attempts_ = 0;
    std::size_t fail_from_ = std::numeric_limits<std::size_t>::max();
    std::size_t fail_count_ = 0;
};

}  // namespace moheat::testing
