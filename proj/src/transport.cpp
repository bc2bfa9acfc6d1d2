#include "moheat/transport.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <termios.h>
#include <unistd.h>

namespace moheat {

void BytePipe::push(std::span<const std::uint8_t> bytes) {
    {
        std::lock_guard lock(mutex_);
        if (closed_) throw TransportError("loopback pipe is closed");
        bytes_.insert(bytes_.end(), bytes.begin(), bytes.end());
    }
    cv_.notify_all();
}

std::size_t BytePipe::pop(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return !bytes_.empty() || closed_; });
    const std::size_t n = std::min(out.size(), bytes_.size());
    std::copy_n(bytes_.begin(), n, out.begin());
    bytes_.erase(bytes_.begin(), bytes_.begin() + static_cast<std::ptrdiff_t>(n));
    return n;
}

std::vector<std::uint8_t> BytePipe::drain() {
    std::lock_guard lock(mutex_);
    std::vector<std::uint8_t> out(bytes_.begin(), bytes_.end());
    bytes_.clear();
    return out;
}

void BytePipe::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool BytePipe::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

LoopbackEnd::LoopbackEnd(std::shared_ptr<BytePipe> tx, std::shared_ptr<BytePipe> rx,
                         std::string name)
    : tx_(std::move(tx)), rx_(std::move(rx)), name_(std::move(name)) {}

void LoopbackEnd::write(std::span<const std::uint8_t> bytes) { tx_->push(bytes); }

std::size_t LoopbackEnd::read_some(std::span<std::uint8_t> out,
                                   std::chrono::milliseconds timeout) {
    return rx_->pop(out, timeout);
}

LoopbackLink make_loopback() {
    auto to_device = std::make_shared<BytePipe>();
    auto to_host = std::make_shared<BytePipe>();
    return {std::make_shared<LoopbackEnd>(to_device, to_host, "loopback:host"),
            std::make_shared<LoopbackEnd>(to_host, to_device, "loopback:device")};
}

namespace {

speed_t to_speed(int baud) {
    switch (baud) {
        case 9600: return B9600;
        case 19200: return B19200;
        case 38400: return B38400;
        case 57600: return B57600;
        case 115200: return B115200;
        case 230400: return B230400;
        case 460800: return B460800;
        case 921600: return B921600;
        default: throw TransportError("unsupported baud rate " + std::to_string(baud));
    }
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

SerialTransport::SerialTransport(SerialSettings settings) : settings_(std::move(settings)) {
    const speed_t speed = to_speed(settings_.baud);
    fd_ = ::open(settings_.path.c_str(), O_RDWR | O_NOCTTY | O_CLOEXEC);
    if (fd_ < 0) throw TransportError("cannot open " + settings_.path + ": " + errno_text());

    termios tio{};
    if (::tcgetattr(fd_, &tio) != 0) {
        const auto msg = errno_text();
        ::close(fd_);
        throw TransportError("cannot configure " + settings_.path + ": " + msg);
    }
    ::cfmakeraw(&tio);
    tio.c_cflag &= ~static_cast<tcflag_t>(PARENB | CSTOPB | CSIZE | CRTSCTS);
    tio.c_cflag |= CS8 | CLOCAL | CREAD;
    tio.c_cc[VMIN] = 0;
    tio.c_cc[VTIME] = 0;
    ::cfsetispeed(&tio, speed);
    ::cfsetospeed(&tio, speed);
    if (::tcsetattr(fd_, TCSANOW, &tio) != 0) {
        const auto msg = errno_text();
        ::close(fd_);
        throw TransportError("cannot configure " + settings_.path + ": " + msg);
    }
}

SerialTransport::~SerialTransport() {
    if (fd_ >= 0) ::close(fd_);
}

void SerialTransport::write(std::span<const std::uint8_t> bytes) {
    std::size_t done = 0;
    while (done < bytes.size()) {
        const ssize_t n = ::write(fd_, bytes.data() + done, bytes.size() - done);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw TransportError("write to " + settings_.path + " failed: " + errno_text());
        }
        done += static_cast<std::size_t>(n);
    }
}

std::size_t SerialTransport::read_some(std::span<std::uint8_t> out,
                                       std::chrono::milliseconds timeout) {
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (ready < 0) {
        if (errno == EINTR) return 0;
        throw TransportError("poll on " + settings_.path + " failed: " + errno_text());
    }
    if (ready == 0) return 0;
    if (pfd.revents & (POLLERR | POLLNVAL)) {
        throw TransportError("serial port " + settings_.path + " reported an error");
    }
    const ssize_t n = ::read(fd_, out.data(), out.size());
    if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) return 0;
        throw TransportError("read from " + settings_.path + " failed: " + errno_text());
    }
    return static_cast<std::size_t>(n);
}

bool serial_port_available(const std::string& path) {
    return ::access(path.c_str(), R_OK | W_OK) == 0;
}

}  // namespace moheat
