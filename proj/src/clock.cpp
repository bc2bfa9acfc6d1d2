#include "moheat/clock.hpp"

#include <cassert>
#include <thread>

namespace moheat {

using namespace std::chrono_literals;

SystemClock::SystemClock() : origin_(std::chrono::steady_clock::now()) {}

std::int64_t SystemClock::now_ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - origin_)
        .count();
}

bool SystemClock::sleep_until(std::int64_t t_ms, std::stop_token cancel) {
    const auto deadline = origin_ + std::chrono::milliseconds(t_ms);
    const auto coarse = deadline - 1ms;
    if (std::chrono::steady_clock::now() < coarse) {
        std::mutex m;
        std::condition_variable_any cv;
        std::unique_lock lock(m);
        cv.wait_until(lock, cancel, coarse, [] { return false; });
    }
    while (std::chrono::steady_clock::now() < deadline) {
        if (cancel.stop_requested()) return false;
        std::this_thread::yield();
    }
    return !cancel.stop_requested() || now_ms() >= t_ms;
}

std::int64_t VirtualClock::now_ms() const {
    std::lock_guard lock(mutex_);
    return now_;
}

void VirtualClock::attach() {
    std::lock_guard lock(mutex_);
    ++attached_;
    ++running_;
}

void VirtualClock::detach() {
    {
        std::lock_guard lock(mutex_);
        assert(attached_ > 0 && running_ > 0);
        --attached_;
        --running_;
    }
    cv_.notify_all();
}

bool VirtualClock::sleep_until(std::int64_t t_ms, std::stop_token cancel) {
    std::unique_lock lock(mutex_);
    if (now_ >= t_ms) return true;
    if (cancel.stop_requested()) return false;
    assert(attached_ > 0 && "sleepers on a VirtualClock must be attached participants");

    const std::uint64_t ticket = next_ticket_++;
    sleepers_.emplace(t_ms, ticket);
    --running_;
    cv_.notify_all();

    cv_.wait(lock, cancel, [&] { return now_ >= t_ms; });
    if (now_ >= t_ms) return true;  // released (and re-counted) by advance_to

    auto [first, last] = sleepers_.equal_range(t_ms);
    for (auto it = first; it != last; ++it) {
        if (it->second == ticket) {
            sleepers_.erase(it);
            break;
        }
    }
    ++running_;
    return false;
}

void VirtualClock::advance_to(std::int64_t t_ms) {
    std::unique_lock lock(mutex_);
    for (;;) {
        cv_.wait(lock, [&] { return running_ == 0; });
        if (sleepers_.empty() || sleepers_.begin()->first > t_ms) break;
        now_ = std::max(now_, sleepers_.begin()->first);
        while (!sleepers_.empty() && sleepers_.begin()->first <= now_) {
            sleepers_.erase(sleepers_.begin());
            ++running_;
        }
        cv_.notify_all();
    }
    now_ = std::max(now_, t_ms);
    cv_.notify_all();
}

void VirtualClock::wait_quiescent() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return running_ == 0; });
}

std::optional<std::int64_t> VirtualClock::next_deadline() const {
    std::lock_guard lock(mutex_);
    if (sleepers_.empty()) return std::nullopt;
    return sleepers_.begin()->first;
}

int VirtualClock::participants() const {
    std::lock_guard lock(mutex_);
    return attached_;
}

}  // namespace moheat
