#pragma once

// Test-only generators and independent oracles.

#include "moheat/pattern.hpp"
#include "moheat/protocol.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace moheat::testing {

using Rng = std::mt19937_64;

inline std::int64_t uniform(Rng& rng, std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

inline double unit(Rng& rng) {
    // Mix exact endpoints in with the continuous range.
    switch (uniform(rng, 0, 9)) {
        case 0: return 0.0;
        case 1: return 1.0;
        default: return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    }
}

inline Phase random_phase(Rng& rng) { return uniform(rng, 0, 1) ? Phase::hot : Phase::cold; }

/// `step` forces every time to a multiple of it (useful for dt-aligned simulations).
inline DualPattern random_dual(Rng& rng, std::int64_t max_ms = 3000, std::int64_t step = 1) {
    DualPattern d;
    d.cold_intensity = {unit(rng)};
    d.cold_duration_ms = uniform(rng, 1, max_ms / step) * step;
    d.hot_intensity = {unit(rng)};
    d.hot_duration_ms = uniform(rng, 1, max_ms / step) * step;
    d.gap_ms = uniform(rng, 0, 2) == 0 ? 0 : uniform(rng, 0, max_ms / step / 2) * step;
    d.repeats = uniform(rng, 1, 5);
    d.start_phase = random_phase(rng);
    d.delay_ms = uniform(rng, 0, 1) ? 0 : uniform(rng, 0, max_ms / step) * step;
    return d;
}

inline StimulusPattern random_pattern(Rng& rng, std::int64_t max_ms = 3000, std::int64_t step = 1) {
    const std::int64_t duration = uniform(rng, 1, max_ms / step) * step;
    const std::int64_t delay = uniform(rng, 0, 1) ? 0 : uniform(rng, 0, max_ms / step) * step;
    switch (uniform(rng, 0, 4)) {
        case 0: return ColdPattern{{unit(rng)}, duration, delay};
        case 1: return ColdLevelPattern{{static_cast<int>(uniform(rng, 1, 5))}, duration, delay};
        case 2: return HotPattern{{unit(rng)}, duration, delay};
        case 3: return HotLevelPattern{{static_cast<int>(uniform(rng, 1, 5))}, duration, delay};
        default: return random_dual(rng, max_ms, step);
    }
}

inline protocol::Message random_message(Rng& rng) {
    using namespace protocol;
    const auto byte = [&] { return static_cast<std::uint8_t>(uniform(rng, 0, 255)); };
    switch (uniform(rng, 0, 6)) {
        case 0: return SetColdDuty{byte()};
        case 1: return SetHotDuty{byte()};
        case 2: return AllOff{};
        case 3: return Ping{};
        case 4: return GetStatus{};
        case 5: return Ack{static_cast<Opcode>(uniform(rng, 1, 5))};
        default: return Status{byte(), byte()};
    }
}

/// Brute-force Dual expansion: labels every millisecond of the pattern
/// (-2 delay, -1 gap, k = k-th phase), then reads entries off the label
/// changes. Shares no arithmetic with compile_pattern.
inline ActionTimeline enumerate_dual(const DualPattern& p) {
    std::vector<int> label;
    for (std::int64_t i = 0; i < p.delay_ms; ++i) label.push_back(-2);
    const int phases = static_cast<int>(2 * p.repeats);
    std::vector<Phase> kind;
    Phase current = p.start_phase;
    for (int k = 0; k < phases; ++k) {
        kind.push_back(current);
        const auto len = current == Phase::cold ? p.cold_duration_ms : p.hot_duration_ms;
        for (std::int64_t i = 0; i < len; ++i) label.push_back(k);
        if (k + 1 < phases) {
            for (std::int64_t i = 0; i < p.gap_ms; ++i) label.push_back(-1);
        }
        current = current == Phase::cold ? Phase::hot : Phase::cold;
    }

    ActionTimeline tl;
    int previous = -3;
    for (std::size_t t = 0; t < label.size(); ++t) {
        const int l = label[t];
        if (l == previous) continue;
        previous = l;
        if (l == -2) continue;
        TimedActionSet step{static_cast<std::int64_t>(t), {}};
        if (l == -1) {
            step.actions.push_back(Action::all_off());
        } else if (kind[static_cast<std::size_t>(l)] == Phase::cold) {
            if (l > 0) step.actions.push_back(Action::set_hot(0.0));
            step.actions.push_back(Action::set_cold(p.cold_intensity.value));
        } else {
            if (l > 0) step.actions.push_back(Action::set_cold(0.0));
            step.actions.push_back(Action::set_hot(p.hot_intensity.value));
        }
        tl.entries.push_back(std::move(step));
    }
    tl.total_ms = static_cast<std::int64_t>(label.size());
    tl.entries.push_back({tl.total_ms, {Action::all_off()}});
    return tl;
}

inline ActionTimeline shifted(ActionTimeline tl, std::int64_t by) {
    for (auto& e : tl.entries) e.t_ms += by;
    tl.total_ms += by;
    return tl;
}

}  // namespace moheat::testing
