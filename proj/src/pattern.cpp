#include "moheat/pattern.hpp"

#include <cmath>
#include <sstream>

namespace moheat {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

void check_intensity(std::vector<Violation>& out, const char* field, Intensity u) {
    if (!std::isfinite(u.value) || u.value < 0.0 || u.value > 1.0) {
        std::ostringstream msg;
        msg << "must be within [0, 1], got " << u.value;
        out.push_back({field, msg.str()});
    }
}

void check_level(std::vector<Violation>& out, LevelIndex l) {
    if (l.level < 1 || l.level > 5) {
        out.push_back({"level", "must be one of 1..5, got " + std::to_string(l.level)});
    }
}

void check_at_least(std::vector<Violation>& out, const char* field, std::int64_t v,
                    std::int64_t min) {
    if (v < min) {
        out.push_back({field, "must be >= " + std::to_string(min) + ", got " + std::to_string(v)});
    }
}

void check_single(std::vector<Violation>& out, std::int64_t duration_ms, std::int64_t delay_ms) {
    check_at_least(out, "duration_ms", duration_ms, 1);
    check_at_least(out, "delay_ms", delay_ms, 0);
}

// Bounds the timeline length so total_ms never overflows; about 292 years.
constexpr std::int64_t kMaxTotalMs = std::int64_t{1} << 53;

ActionTimeline single_stimulus(Action on, std::int64_t duration_ms, std::int64_t delay_ms) {
    ActionTimeline tl;
    tl.entries.push_back({delay_ms, {on}});
    tl.entries.push_back({delay_ms + duration_ms, {Action::all_off()}});
    tl.total_ms = delay_ms + duration_ms;
    return tl;
}

ActionTimeline compile_dual(const DualPattern& p) {
    ActionTimeline tl;
    std::int64_t t = p.delay_ms;
    const std::int64_t phases = 2 * p.repeats;
    Phase phase = p.start_phase;
    for (std::int64_t i = 0; i < phases; ++i) {
        TimedActionSet step{t, {}};
        if (phase == Phase::cold) {
            if (i > 0) step.actions.push_back(Action::set_hot(0.0));
            step.actions.push_back(Action::set_cold(p.cold_intensity.value));
            t += p.cold_duration_ms;
        } else {
            if (i > 0) step.actions.push_back(Action::set_cold(0.0));
            step.actions.push_back(Action::set_hot(p.hot_intensity.value));
            t += p.hot_duration_ms;
        }
        tl.entries.push_back(std::move(step));
        if (i + 1 < phases && p.gap_ms > 0) {
            tl.entries.push_back({t, {Action::all_off()}});
            t += p.gap_ms;
        }
        phase = phase == Phase::cold ? Phase::hot : Phase::cold;
    }
    tl.entries.push_back({t, {Action::all_off()}});
    tl.total_ms = t;
    return tl;
}

}  // namespace

std::string_view pattern_type_name(const StimulusPattern& p) {
    return std::visit(overloaded{
                          [](const ColdPattern&) { return std::string_view{"cold"}; },
                          [](const ColdLevelPattern&) { return std::string_view{"cold_level"}; },
                          [](const HotPattern&) { return std::string_view{"hot"}; },
                          [](const HotLevelPattern&) { return std::string_view{"hot_level"}; },
                          [](const DualPattern&) { return std::string_view{"dual"}; },
                      },
                      p);
}

std::string ValidationReport::to_string() const {
    if (ok()) return "ok";
    std::string out;
    for (const auto& v : violations) {
        if (!out.empty()) out += "; ";
        out += v.field + ": " + v.message;
    }
    return out;
}

ValidationError::ValidationError(ValidationReport report)
    : std::runtime_error("invalid pattern: " + report.to_string()), report_(std::move(report)) {}

ValidationReport validate_pattern(const StimulusPattern& p) {
    ValidationReport report;
    auto& out = report.violations;
    std::visit(overloaded{
                   [&](const ColdPattern& c) {
                       check_intensity(out, "intensity", c.intensity);
                       check_single(out, c.duration_ms, c.delay_ms);
                   },
                   [&](const ColdLevelPattern& c) {
                       check_level(out, c.level);
                       check_single(out, c.duration_ms, c.delay_ms);
                   },
                   [&](const HotPattern& h) {
                       check_intensity(out, "intensity", h.intensity);
                       check_single(out, h.duration_ms, h.delay_ms);
                   },
                   [&](const HotLevelPattern& h) {
                       check_level(out, h.level);
                       check_single(out, h.duration_ms, h.delay_ms);
                   },
                   [&](const DualPattern& d) {
                       check_intensity(out, "cold_intensity", d.cold_intensity);
                       check_at_least(out, "cold_duration_ms", d.cold_duration_ms, 1);
                       check_intensity(out, "hot_intensity", d.hot_intensity);
                       check_at_least(out, "hot_duration_ms", d.hot_duration_ms, 1);
                       check_at_least(out, "gap_ms", d.gap_ms, 0);
                       check_at_least(out, "repeats", d.repeats, 1);
                       check_at_least(out, "delay_ms", d.delay_ms, 0);
                   },
               },
               p);
    if (!report.ok()) return report;

    const auto too_long = [&](long double total) {
        if (total > static_cast<long double>(kMaxTotalMs)) {
            out.push_back({pattern_type_name(p) == "dual" ? "repeats" : "duration_ms",
                           "total pattern length exceeds 2^53 ms"});
        }
    };
    std::visit(overloaded{
                   [&](const DualPattern& d) {
                       const long double r = static_cast<long double>(d.repeats);
                       const long double cycle = static_cast<long double>(d.cold_duration_ms) +
                                                 static_cast<long double>(d.hot_duration_ms);
                       too_long(static_cast<long double>(d.delay_ms) + r * cycle +
                                (2 * r - 1) * static_cast<long double>(d.gap_ms));
                   },
                   [&](const auto& s) {
                       too_long(static_cast<long double>(s.delay_ms) + s.duration_ms);
                   },
               },
               p);
    return report;
}

Intensity level_to_intensity(LevelIndex level) {
    if (level.level < 1 || level.level > 5) {
        throw std::domain_error("level must be within 1..5, got " + std::to_string(level.level));
    }
    return {kLevelIntensities[static_cast<std::size_t>(level.level - 1)]};
}

std::string to_string(const Action& a) {
    std::ostringstream os;
    switch (a.kind) {
        case Action::Kind::set_cold: os << "SetCold " << a.intensity.value; break;
        case Action::Kind::set_hot: os << "SetHot " << a.intensity.value; break;
        case Action::Kind::all_off: os << "AllOff"; break;
    }
    return os.str();
}

std::vector<std::string> check_timeline(const ActionTimeline& tl) {
    std::vector<std::string> problems;
    if (tl.entries.empty()) {
        problems.emplace_back("timeline has no entries");
        return problems;
    }
    if (tl.entries.front().t_ms < 0) problems.emplace_back("first entry has negative t_ms");
    for (std::size_t i = 0; i < tl.entries.size(); ++i) {
        const auto& e = tl.entries[i];
        if (i > 0 && e.t_ms <= tl.entries[i - 1].t_ms) {
            problems.push_back("entry " + std::to_string(i) + " is not strictly after its predecessor");
        }
        if (e.actions.empty()) {
            problems.push_back("entry " + std::to_string(i) + " has no actions");
        }
        bool seen_activation = false;
        for (const auto& a : e.actions) {
            if (a.kind != Action::Kind::all_off &&
                (!std::isfinite(a.intensity.value) || a.intensity.value < 0.0 ||
                 a.intensity.value > 1.0)) {
                problems.push_back("entry " + std::to_string(i) + " has an out-of-range intensity");
            }
            if (a.is_deactivation()) {
                if (seen_activation) {
                    problems.push_back("entry " + std::to_string(i) +
                                       " orders a deactivation after an activation");
                }
            } else {
                seen_activation = true;
            }
        }
    }
    const auto& last = tl.entries.back();
    bool ends_off = false;
    for (const auto& a : last.actions) ends_off = ends_off || a.kind == Action::Kind::all_off;
    if (!ends_off) problems.emplace_back("final entry does not contain AllOff");
    if (last.t_ms != tl.total_ms) problems.emplace_back("final entry t_ms differs from total_ms");
    return problems;
}

ActionTimeline compile_pattern(const StimulusPattern& p) {
    if (auto report = validate_pattern(p); !report.ok()) throw ValidationError(std::move(report));
    return std::visit(
        overloaded{
            [](const ColdPattern& c) {
                return single_stimulus(Action::set_cold(c.intensity.value), c.duration_ms,
                                       c.delay_ms);
            },
            [](const ColdLevelPattern& c) {
                return single_stimulus(Action::set_cold(level_to_intensity(c.level).value),
                                       c.duration_ms, c.delay_ms);
            },
            [](const HotPattern& h) {
                return single_stimulus(Action::set_hot(h.intensity.value), h.duration_ms,
                                       h.delay_ms);
            },
            [](const HotLevelPattern& h) {
                return single_stimulus(Action::set_hot(level_to_intensity(h.level).value),
                                       h.duration_ms, h.delay_ms);
            },
            [](const DualPattern& d) { return compile_dual(d); },
        },
        p);
}

}  // namespace moheat
