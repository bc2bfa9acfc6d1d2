#pragma once

// Byte transports between the host and a (real or virtual) device.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace moheat {

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A bidirectional byte channel. Writes either deliver every byte or throw
/// TransportError. Reads return whatever is available within the timeout.
class Transport {
public:
    virtual ~Transport() = default;

    virtual void write(std::span<const std::uint8_t> bytes) = 0;
    virtual std::size_t read_some(std::span<std::uint8_t> out,
                                  std::chrono::milliseconds timeout) = 0;
    virtual std::string describe() const = 0;

    /// Playback exclusivity: at most one session may drive a transport.
    bool try_acquire() { return !busy_.exchange(true); }
    void release() { busy_.store(false); }
    bool busy() const { return busy_.load(); }

private:
    std::atomic<bool> busy_{false};
};

/// In-memory one-directional byte queue; safe for one writer and one reader.
class BytePipe {
public:
    void push(std::span<const std::uint8_t> bytes);
    /// Waits up to `timeout` for data, then moves out as much as fits.
    std::size_t pop(std::span<std::uint8_t> out, std::chrono::milliseconds timeout);
    /// Everything currently queued, without waiting.
    std::vector<std::uint8_t> drain();
    void close();
    bool closed() const;

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::uint8_t> bytes_;
    bool closed_ = false;
};

/// One end of an in-process loopback link.
class LoopbackEnd final : public Transport {
public:
    LoopbackEnd(std::shared_ptr<BytePipe> tx, std::shared_ptr<BytePipe> rx, std::string name);

    void write(std::span<const std::uint8_t> bytes) override;
    std::size_t read_some(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) override;
    std::string describe() const override { return name_; }

    /// Non-blocking read of everything the peer has written so far.
    std::vector<std::uint8_t> drain() { return rx_->drain(); }
    /// Closes the outgoing direction; later writes throw TransportError.
    void close() { tx_->close(); }

private:
    std::shared_ptr<BytePipe> tx_;
    std::shared_ptr<BytePipe> rx_;
    std::string name_;
};

struct LoopbackLink {
    std::shared_ptr<LoopbackEnd> host;
    std::shared_ptr<LoopbackEnd> device;
};

LoopbackLink make_loopback();

struct SerialSettings {
    std::string path;
    int baud = 115200;  // 8N1, no flow control
};

/// POSIX tty binding. Throws TransportError when the port cannot be opened or configured.
class SerialTransport final : public Transport {
public:
    explicit SerialTransport(SerialSettings settings);
    ~SerialTransport() override;
    SerialTransport(const SerialTransport&) = delete;
    SerialTransport& operator=(const SerialTransport&) = delete;

    void write(std::span<const std::uint8_t> bytes) override;
    std::size_t read_some(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) override;
    std::string describe() const override { return "serial:" + settings_.path; }

private:
    SerialSettings settings_;
    int fd_ = -1;
};

/// True when `path` names a device node this process can open read/write.
bool serial_port_available(const std::string& path);

}  // namespace moheat
