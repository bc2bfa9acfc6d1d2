#include "moheat/scheduler.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>

namespace moheat {

std::string_view to_string(PlaybackState s) {
    switch (s) {
        case PlaybackState::idle: return "idle";
        case PlaybackState::delaying: return "delaying";
        case PlaybackState::playing: return "playing";
        case PlaybackState::done: return "done";
        case PlaybackState::stopped: return "stopped";
        case PlaybackState::failed: return "failed";
    }
    return "unknown";
}

bool is_terminal(PlaybackState s) {
    return s == PlaybackState::done || s == PlaybackState::stopped || s == PlaybackState::failed;
}

struct PlaybackSession::State {
    ActionTimeline timeline;
    std::shared_ptr<Transport> transport;
    std::shared_ptr<Clock> clock;
    std::int64_t start_ms = 0;

    mutable std::mutex mutex;
    mutable std::condition_variable changed;
    PlaybackState state = PlaybackState::idle;
    std::size_t next_index = 0;
    std::int64_t end_ms = 0;
    DispatchLog log;
    std::atomic<std::uint64_t> frames_sent{0};

    std::mutex stop_mutex;
    std::jthread worker;  // last member: joined before anything above is destroyed

    std::int64_t offset_now() const { return clock->now_ms() - start_ms; }

    // Writes one batch of commands as a single transport write.
    void send(const std::vector<protocol::Command>& commands) {
        std::vector<std::uint8_t> bytes;
        for (const auto& c : commands) {
            const auto frame = protocol::encode_frame(c);
            bytes.insert(bytes.end(), frame.begin(), frame.end());
        }
        transport->write(bytes);
        frames_sent += commands.size();
    }

    void finish(PlaybackState terminal, std::int64_t at, std::optional<DispatchRecord> last,
                std::string error = {}) {
        transport->release();
        {
            std::lock_guard lock(mutex);
            if (last) log.records.push_back(std::move(*last));
            state = terminal;
            end_ms = at;
            log.terminal = terminal;
            log.error = std::move(error);
        }
        changed.notify_all();
    }

    // Safety path shared by stop and transport failure.
    void shut_off(PlaybackState reason, std::string error) {
        const std::int64_t at = std::max<std::int64_t>(offset_now(), 0);
        const std::vector<protocol::Command> off{protocol::AllOff{}};
        try {
            send(off);
        } catch (const TransportError& e) {
            if (error.empty()) error = e.what();
            finish(PlaybackState::failed, at, std::nullopt, std::move(error));
            return;
        }
        finish(reason, at, DispatchRecord{at, at, off, true}, std::move(error));
    }

    void run(std::stop_token stop) {
        auto participant = ClockParticipant::adopt(*clock);
        const auto& entries = timeline.entries;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& entry = entries[i];
            if (!clock->sleep_until(start_ms + entry.t_ms, stop) || stop.stop_requested()) {
                shut_off(PlaybackState::stopped, {});
                return;
            }
            const auto commands = protocol::actions_to_commands(entry);
            DispatchRecord record{entry.t_ms, offset_now(), commands, false};
            try {
                send(commands);
            } catch (const TransportError& e) {
                shut_off(PlaybackState::failed, e.what());
                return;
            }
            if (i + 1 == entries.size()) {
                finish(PlaybackState::done, timeline.total_ms, std::move(record));
                return;
            }
            {
                std::lock_guard lock(mutex);
                log.records.push_back(std::move(record));
                next_index = i + 1;
                state = PlaybackState::playing;
            }
            changed.notify_all();
        }
    }
};

PlaybackStatus PlaybackSession::status() const {
    const auto& s = *state_;
    std::lock_guard lock(s.mutex);
    PlaybackStatus out;
    out.state = s.state;
    if (is_terminal(s.state)) {
        out.elapsed_ms = s.end_ms;
    } else {
        out.elapsed_ms = std::max<std::int64_t>(s.offset_now(), 0);
        if (s.next_index < s.timeline.entries.size()) {
            out.next_event_t_ms = s.timeline.entries[s.next_index].t_ms;
        }
    }
    return out;
}

DispatchLog PlaybackSession::stop() {
    auto& s = *state_;
    {
        std::lock_guard serial(s.stop_mutex);
        if (s.worker.joinable()) {
            s.worker.request_stop();
            s.worker.join();
        }
    }
    return log();
}

DispatchLog PlaybackSession::wait() const {
    const auto& s = *state_;
    std::unique_lock lock(s.mutex);
    s.changed.wait(lock, [&] { return is_terminal(s.state); });
    return s.log;
}

DispatchLog PlaybackSession::log() const {
    const auto& s = *state_;
    std::lock_guard lock(s.mutex);
    return s.log;
}

PlaybackSession::Progress PlaybackSession::wait_dispatched_through(std::int64_t t_ms) const {
    const auto& s = *state_;
    std::unique_lock lock(s.mutex);
    s.changed.wait(lock, [&] {
        return is_terminal(s.state) || s.next_index >= s.timeline.entries.size() ||
               s.timeline.entries[s.next_index].t_ms > t_ms;
    });
    return {is_terminal(s.state), s.end_ms};
}

const ActionTimeline& PlaybackSession::timeline() const { return state_->timeline; }

std::uint64_t PlaybackSession::frames_sent() const { return state_->frames_sent.load(); }

std::int64_t PlaybackSession::start_ms() const { return state_->start_ms; }

PlaybackSession play(ActionTimeline timeline, std::shared_ptr<Transport> transport,
                     std::shared_ptr<Clock> clock) {
    if (const auto problems = check_timeline(timeline); !problems.empty()) {
        throw std::invalid_argument("malformed timeline: " + problems.front());
    }
    if (!transport->try_acquire()) {
        throw TransportBusy(transport->describe() + " is already playing another timeline");
    }

    auto state = std::make_shared<PlaybackSession::State>();
    state->timeline = std::move(timeline);
    state->transport = std::move(transport);
    state->clock = std::move(clock);
    state->start_ms = state->clock->now_ms();
    state->state = state->timeline.entries.front().t_ms > 0 ? PlaybackState::delaying
                                                            : PlaybackState::playing;
    state->clock->attach();
    auto* raw = state.get();
    state->worker = std::jthread([raw](std::stop_token stop) { raw->run(std::move(stop)); });
    return PlaybackSession(std::move(state));
}

}  // namespace moheat
