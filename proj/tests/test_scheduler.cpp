#include "moheat/scheduler.hpp"

#include "recording_transport.hpp"
#include "support.hpp"

#include <doctest.h>

#include <thread>

using namespace moheat;
using namespace moheat::protocol;
using testing::RecordingTransport;

namespace {

std::vector<std::int64_t> actual_times(const DispatchLog& log) {
    std::vector<std::int64_t> out;
    for (const auto& r : log.records) out.push_back(r.actual_t_ms);
    return out;
}

DualPattern dual_example() {
    DualPattern d;
    d.cold_intensity = {1.0};
    d.cold_duration_ms = 1000;
    d.hot_intensity = {0.8};
    d.hot_duration_ms = 1000;
    d.repeats = 2;
    return d;
}

struct Rig {
    std::shared_ptr<VirtualClock> clock = std::make_shared<VirtualClock>();
    std::shared_ptr<RecordingTransport> transport = std::make_shared<RecordingTransport>();
};

}  // namespace

TEST_CASE("virtual clock dispatches exactly on schedule") {
    Rig rig;
    const auto tl = compile_pattern(ColdPattern{{1.0}, 2000, 0});
    auto session = play(tl, rig.transport, rig.clock);
    rig.clock->advance_to(5000);
    const auto log = session.wait();
    CHECK(log.terminal == PlaybackState::done);
    CHECK(actual_times(log) == std::vector<std::int64_t>{0, 2000});
    CHECK(rig.transport->messages() ==
          std::vector<Message>{SetColdDuty{255}, AllOff{}});
    CHECK(session.status().state == PlaybackState::done);
    CHECK(session.status().elapsed_ms == 2000);
    CHECK_FALSE(rig.transport->busy());
}

TEST_CASE("dual example dispatch times") {
    Rig rig;
    auto session = play(compile_pattern(dual_example()), rig.transport, rig.clock);
    rig.clock->advance_to(4000);
    const auto log = session.wait();
    CHECK(actual_times(log) == std::vector<std::int64_t>{0, 1000, 2000, 3000, 4000});
    CHECK(rig.transport->messages() ==
          std::vector<Message>{SetColdDuty{255}, SetColdDuty{0}, SetHotDuty{204}, SetHotDuty{0},
                               SetColdDuty{255}, SetColdDuty{0}, SetHotDuty{204}, AllOff{}});
}

TEST_CASE("status transitions") {
    Rig rig;
    auto session = play(compile_pattern(HotPattern{{1.0}, 1000, 500}), rig.transport, rig.clock);
    auto st = session.status();
    CHECK(st.state == PlaybackState::delaying);
    CHECK(st.next_event_t_ms == 500);

    rig.clock->advance_to(600);
    rig.clock->wait_quiescent();
    st = session.status();
    CHECK(st.state == PlaybackState::playing);
    CHECK(st.elapsed_ms == 600);
    CHECK(st.next_event_t_ms == 1500);

    rig.clock->advance_to(1500);
    session.wait();
    CHECK(session.status().state == PlaybackState::done);
    CHECK_FALSE(session.status().next_event_t_ms);
}

TEST_CASE("stop mid-playback sends one safety AllOff") {
    Rig rig;
    auto session = play(compile_pattern(HotPattern{{1.0}, 1000, 0}), rig.transport, rig.clock);
    rig.clock->advance_to(300);
    const auto log = session.stop();
    CHECK(log.terminal == PlaybackState::stopped);
    REQUIRE(log.records.size() == 2);
    CHECK(log.records[0].scheduled_t_ms == 0);
    CHECK(log.records[1].safety_off);
    CHECK(log.records[1].actual_t_ms == 300);
    CHECK(rig.transport->messages() == std::vector<Message>{SetHotDuty{255}, AllOff{}});
    CHECK(session.status().state == PlaybackState::stopped);
    CHECK(session.status().elapsed_ms == 300);

    // Idempotent: nothing more goes on the wire.
    CHECK(session.stop() == log);
    CHECK(rig.transport->messages().size() == 2);
}

TEST_CASE("stop during the delay phase") {
    Rig rig;
    auto session = play(compile_pattern(ColdPattern{{1.0}, 1000, 500}), rig.transport, rig.clock);
    rig.clock->advance_to(200);
    const auto log = session.stop();
    REQUIRE(log.records.size() == 1);
    CHECK(log.records[0].safety_off);
    CHECK(log.records[0].commands == std::vector<Command>{AllOff{}});
    CHECK(rig.transport->messages() == std::vector<Message>{AllOff{}});
}

TEST_CASE("stop on a finished session changes nothing") {
    Rig rig;
    auto session = play(compile_pattern(ColdPattern{{1.0}, 100, 0}), rig.transport, rig.clock);
    rig.clock->advance_to(100);
    const auto done = session.wait();
    CHECK(session.stop() == done);
    CHECK(session.status().state == PlaybackState::done);
    CHECK(rig.transport->messages().size() == 2);
}

TEST_CASE("concurrent stops send exactly one AllOff") {
    Rig rig;
    auto session = play(compile_pattern(ColdPattern{{1.0}, 1000, 0}), rig.transport, rig.clock);
    rig.clock->advance_to(10);
    std::vector<DispatchLog> logs(8);
    {
        std::vector<std::jthread> stoppers;
        for (auto& slot : logs) stoppers.emplace_back([&slot, session]() mutable { slot = session.stop(); });
    }
    for (const auto& l : logs) CHECK(l == logs.front());
    CHECK(rig.transport->messages() == std::vector<Message>{SetColdDuty{255}, AllOff{}});
}

TEST_CASE("one session per transport") {
    Rig rig;
    auto first = play(compile_pattern(ColdPattern{{1.0}, 1000, 0}), rig.transport, rig.clock);
    CHECK_THROWS_AS(play(compile_pattern(HotPattern{{1.0}, 1000, 0}), rig.transport, rig.clock),
                    TransportBusy);
    first.stop();
    auto second = play(compile_pattern(HotPattern{{1.0}, 10, 0}), rig.transport, rig.clock);
    rig.clock->advance_by(10);
    CHECK(second.wait().terminal == PlaybackState::done);
}

TEST_CASE("malformed timelines are refused") {
    Rig rig;
    CHECK_THROWS_AS(play(ActionTimeline{}, rig.transport, rig.clock), std::invalid_argument);
    CHECK_FALSE(rig.transport->busy());
}

TEST_CASE("transport failure reports failed after a best-effort AllOff") {
    SUBCASE("transport still reachable for the AllOff") {
        Rig rig;
        rig.transport->inject_failures(1, 1);
        auto session = play(compile_pattern(dual_example()), rig.transport, rig.clock);
        rig.clock->advance_to(4000);
        const auto log = session.wait();
        CHECK(log.terminal == PlaybackState::failed);
        CHECK_FALSE(log.error.empty());
        REQUIRE(log.records.size() == 2);
        CHECK(log.records.back().safety_off);
        CHECK(rig.transport->messages().back() == Message{AllOff{}});
    }
    SUBCASE("transport gone") {
        Rig rig;
        rig.transport->inject_failures(0);
        auto session = play(compile_pattern(HotPattern{{1.0}, 100, 0}), rig.transport, rig.clock);
        const auto log = session.wait();
        CHECK(log.terminal == PlaybackState::failed);
        CHECK(log.records.empty());
        CHECK(rig.transport->attempts() == 2);
    }
}

TEST_CASE("wait_dispatched_through") {
    Rig rig;
    auto session = play(compile_pattern(ColdPattern{{1.0}, 100, 50}), rig.transport, rig.clock);
    auto p = session.wait_dispatched_through(10);  // nothing due yet
    CHECK_FALSE(p.terminal);
    rig.clock->advance_to(150);
    p = session.wait_dispatched_through(150);
    CHECK(p.terminal);
    CHECK(p.end_ms == 150);
}

TEST_CASE("property: determinism under the virtual clock") {
    testing::Rng rng(12);
    for (int i = 0; i < 20; ++i) {
        const auto tl = compile_pattern(testing::random_pattern(rng, 500));
        std::vector<std::uint8_t> wire[2];
        DispatchLog logs[2];
        for (int run = 0; run < 2; ++run) {
            Rig rig;
            auto session = play(tl, rig.transport, rig.clock);
            rig.clock->advance_to(tl.total_ms);
            logs[run] = session.wait();
            wire[run] = rig.transport->bytes();
        }
        CHECK(wire[0] == wire[1]);
        CHECK(logs[0] == logs[1]);
    }
}

TEST_CASE("property: stop at random times always ends with AllOff") {
    testing::Rng rng(77);
    for (int i = 0; i < 100; ++i) {
        const auto tl = compile_pattern(testing::random_pattern(rng, 400));
        const auto stop_at = testing::uniform(rng, 0, tl.total_ms + 50);
        Rig rig;
        auto session = play(tl, rig.transport, rig.clock);
        rig.clock->advance_to(stop_at);
        const auto log = session.stop();
        INFO("case " << i << " stop_at " << stop_at << " total " << tl.total_ms);
        REQUIRE_FALSE(rig.transport->messages().empty());
        CHECK(rig.transport->messages().back() == Message{AllOff{}});
        for (const auto& r : log.records) {
            if (!r.safety_off) CHECK(r.actual_t_ms == r.scheduled_t_ms);
        }
        CHECK(is_terminal(log.terminal));
    }
}

TEST_CASE("system clock never dispatches early") {
    auto clock = std::make_shared<SystemClock>();
    auto transport = std::make_shared<RecordingTransport>();
    ActionTimeline tl;
    for (int i = 0; i < 20; ++i) tl.entries.push_back({i * 3, {Action::set_cold(0.5)}});
    tl.entries.push_back({60, {Action::all_off()}});
    tl.total_ms = 60;
    auto session = play(tl, transport, clock);
    const auto log = session.wait();
    REQUIRE(log.records.size() == tl.entries.size());
    for (const auto& r : log.records) CHECK(r.actual_t_ms >= r.scheduled_t_ms);
}

TEST_CASE("system clock stop interrupts a long sleep") {
    auto clock = std::make_shared<SystemClock>();
    auto transport = std::make_shared<RecordingTransport>();
    auto session = play(compile_pattern(ColdPattern{{1.0}, 60000, 0}), transport, clock);
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    const auto t0 = std::chrono::steady_clock::now();
    const auto log = session.stop();
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(1));
    CHECK(log.terminal == PlaybackState::stopped);
    CHECK(transport->messages().back() == Message{AllOff{}});
}
