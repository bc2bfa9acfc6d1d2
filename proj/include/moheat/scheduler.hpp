#pragma once

// Timeline playback against a transport.
//
// Each session owns one dispatch thread. stop() and status() may be called
// from any thread; the session handle is a cheap shared reference.

#include "moheat/clock.hpp"
#include "moheat/pattern.hpp"
#include "moheat/protocol.hpp"
#include "moheat/transport.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace moheat {

enum class PlaybackState { idle, delaying, playing, done, stopped, failed };

std::string_view to_string(PlaybackState s);
bool is_terminal(PlaybackState s);

struct PlaybackStatus {
    PlaybackState state = PlaybackState::idle;
    std::int64_t elapsed_ms = 0;
    std::optional<std::int64_t> next_event_t_ms;

    friend bool operator==(const PlaybackStatus&, const PlaybackStatus&) = default;
};

struct DispatchRecord {
    std::int64_t scheduled_t_ms = 0;
    std::int64_t actual_t_ms = 0;
    std::vector<protocol::Command> commands;
    bool safety_off = false;  // AllOff sent by stop() or a failure path, not by the timeline

    friend bool operator==(const DispatchRecord&, const DispatchRecord&) = default;
};

struct DispatchLog {
    std::vector<DispatchRecord> records;
    PlaybackState terminal = PlaybackState::idle;  // done, stopped or failed once finished
    std::string error;                              // transport failure detail, if any

    friend bool operator==(const DispatchLog&, const DispatchLog&) = default;
};

class TransportBusy : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PlaybackSession {
public:
    /// Result of waiting for the dispatcher to catch up with a point in time.
    struct Progress {
        bool terminal = false;
        std::int64_t end_ms = 0;  // playback end (offset) when terminal
    };

    PlaybackStatus status() const;

    /// Idempotent. Cancels pending entries and sends one safety AllOff if
    /// playback was still running, then returns the final log.
    DispatchLog stop();

    /// Blocks until the session reaches a terminal state.
    DispatchLog wait() const;

    /// Snapshot of the log so far.
    DispatchLog log() const;

    /// Blocks until every entry scheduled at or before `t_ms` has been
    /// written to the transport, or the session has ended.
    Progress wait_dispatched_through(std::int64_t t_ms) const;

    const ActionTimeline& timeline() const;
    std::uint64_t frames_sent() const;

    /// Clock time at which playback offset 0 occurred.
    std::int64_t start_ms() const;

    struct State;

private:
    friend PlaybackSession play(ActionTimeline, std::shared_ptr<Transport>, std::shared_ptr<Clock>);
    explicit PlaybackSession(std::shared_ptr<State> state) : state_(std::move(state)) {}

    std::shared_ptr<State> state_;
};

/// Starts playback and returns immediately. Throws TransportBusy if another
/// session is driving `transport`, std::invalid_argument for a malformed timeline.
PlaybackSession play(ActionTimeline timeline, std::shared_ptr<Transport> transport,
                     std::shared_ptr<Clock> clock);

}  // namespace moheat
