#pragma once

// Time sources for playback. All times are integer milliseconds.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <optional>
#include <mutex>
#include <stop_token>

namespace moheat {

class Clock {
public:
    virtual ~Clock() = default;

    /// Monotone; never decreases.
    virtual std::int64_t now_ms() const = 0;

    /// Blocks until now_ms() >= t_ms (returns true) or `cancel` fires (returns false).
    virtual bool sleep_until(std::int64_t t_ms, std::stop_token cancel) = 0;

    /// Participants are contexts that sleep on this clock. A virtual clock
    /// only advances once every attached participant is blocked in
    /// sleep_until, which makes multi-threaded playback deterministic.
    virtual void attach() {}
    virtual void detach() {}
};

/// RAII registration of the calling context as a clock participant.
class ClockParticipant {
public:
    explicit ClockParticipant(Clock& clock) : clock_(&clock) { clock_->attach(); }
    ~ClockParticipant() { reset(); }
    ClockParticipant(ClockParticipant&& other) noexcept : clock_(other.clock_) {
        other.clock_ = nullptr;
    }
    ClockParticipant& operator=(ClockParticipant&&) = delete;
    ClockParticipant(const ClockParticipant&) = delete;
    ClockParticipant& operator=(const ClockParticipant&) = delete;

    void reset() {
        if (clock_) clock_->detach();
        clock_ = nullptr;
    }

    /// Adopts an attach() that was already made on the participant's behalf.
    static ClockParticipant adopt(Clock& clock) { return ClockParticipant(clock, adopt_tag{}); }

private:
    struct adopt_tag {};
    ClockParticipant(Clock& clock, adopt_tag) : clock_(&clock) {}

    Clock* clock_;
};

/// std::chrono::steady_clock, zeroed at construction. Sleeps block until
/// about 1 ms before the deadline and then spin.
class SystemClock final : public Clock {
public:
    SystemClock();

    std::int64_t now_ms() const override;
    bool sleep_until(std::int64_t t_ms, std::stop_token cancel) override;

    std::chrono::steady_clock::time_point origin() const { return origin_; }

private:
    std::chrono::steady_clock::time_point origin_;
};

/// Manually advanced clock for deterministic tests and offline playback.
class VirtualClock final : public Clock {
public:
    explicit VirtualClock(std::int64_t start_ms = 0) : now_(start_ms) {}

    std::int64_t now_ms() const override;
    bool sleep_until(std::int64_t t_ms, std::stop_token cancel) override;
    void attach() override;
    void detach() override;

    /// Moves time forward to `t_ms`, stopping at every sleeper deadline on
    /// the way; each stop waits until all participants are blocked again.
    /// Never moves time backwards.
    void advance_to(std::int64_t t_ms);
    void advance_by(std::int64_t delta_ms) { advance_to(now_ms() + delta_ms); }

    /// Blocks until every attached participant is sleeping or detached.
    void wait_quiescent();

    /// Earliest pending sleeper deadline, if any.
    std::optional<std::int64_t> next_deadline() const;

    int participants() const;

private:
    mutable std::mutex mutex_;
    std::condition_variable_any cv_;
    std::int64_t now_;
    int attached_ = 0;
    int running_ = 0;  // attached participants not currently blocked in sleep_until
    std::multimap<std::int64_t, std::uint64_t> sleepers_;  // deadline -> ticket
    std::uint64_t next_ticket_ = 0;
};

}  // namespace moheat
