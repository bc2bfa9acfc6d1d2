#pragma once

// Stimulus patterns and their compilation into action timelines.
//
// The five pattern shapes are: Cold, ColdLevel, Hot, HotLevel and Dual
// (alternating cold/hot). All times are integer milliseconds relative to
// playback start; intensities are normalized duties in [0, 1].

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace moheat {

/// Normalized actuator output, 0 = off, 1 = full output.
struct Intensity {
    double value = 0.0;

    friend bool operator==(const Intensity&, const Intensity&) = default;
};

/// One of the five preset levels (1..5).
struct LevelIndex {
    int level = 1;

    friend bool operator==(const LevelIndex&, const LevelIndex&) = default;
};

enum class Phase { cold, hot };

struct ColdPattern {
    Intensity intensity;
    std::int64_t duration_ms = 0;
    std::int64_t delay_ms = 0;

    friend bool operator==(const ColdPattern&, const ColdPattern&) = default;
};

struct ColdLevelPattern {
    LevelIndex level;
    std::int64_t duration_ms = 0;
    std::int64_t delay_ms = 0;

    friend bool operator==(const ColdLevelPattern&, const ColdLevelPattern&) = default;
};

struct HotPattern {
    Intensity intensity;
    std::int64_t duration_ms = 0;
    std::int64_t delay_ms = 0;

    friend bool operator==(const HotPattern&, const HotPattern&) = default;
};

struct HotLevelPattern {
    LevelIndex level;
    std::int64_t duration_ms = 0;
    std::int64_t delay_ms = 0;

    friend bool operator==(const HotLevelPattern&, const HotLevelPattern&) = default;
};

/// Alternating cold/hot stimulus. `repeats` counts full cold+hot cycles;
/// `gap_ms` separates consecutive phases (none after the last one).
struct DualPattern {
    Intensity cold_intensity;
    std::int64_t cold_duration_ms = 0;
    Intensity hot_intensity;
    std::int64_t hot_duration_ms = 0;
    std::int64_t gap_ms = 0;
    std::int64_t repeats = 1;
    Phase start_phase = Phase::cold;
    std::int64_t delay_ms = 0;

    friend bool operator==(const DualPattern&, const DualPattern&) = default;
};

using StimulusPattern =
    std::variant<ColdPattern, ColdLevelPattern, HotPattern, HotLevelPattern, DualPattern>;

/// Wire name of the pattern's variant ("cold", "cold_level", ...).
std::string_view pattern_type_name(const StimulusPattern& p);

struct Violation {
    std::string field;  // field name, e.g. "intensity" or "cold_duration_ms"
    std::string message;

    friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    std::string to_string() const;
};

ValidationReport validate_pattern(const StimulusPattern& p);

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(ValidationReport report);

    const ValidationReport& report() const { return report_; }

private:
    ValidationReport report_;
};

/// Preset level map. Replace this table to install a hardware calibration.
inline constexpr std::array<double, 5> kLevelIntensities{0.2, 0.4, 0.6, 0.8, 1.0};

/// Throws std::domain_error for levels outside 1..5.
Intensity level_to_intensity(LevelIndex level);

struct Action {
    enum class Kind { set_cold, set_hot, all_off };

    Kind kind = Kind::all_off;
    Intensity intensity;  // ignored for all_off

    static Action set_cold(double u) { return {Kind::set_cold, {u}}; }
    static Action set_hot(double u) { return {Kind::set_hot, {u}}; }
    static Action all_off() { return {Kind::all_off, {0.0}}; }

    bool is_deactivation() const { return kind == Kind::all_off || intensity.value == 0.0; }

    friend bool operator==(const Action&, const Action&) = default;
};

std::string to_string(const Action& a);

struct TimedActionSet {
    std::int64_t t_ms = 0;
    std::vector<Action> actions;

    friend bool operator==(const TimedActionSet&, const TimedActionSet&) = default;
};

struct ActionTimeline {
    std::vector<TimedActionSet> entries;
    std::int64_t total_ms = 0;

    friend bool operator==(const ActionTimeline&, const ActionTimeline&) = default;
};

/// Empty when `tl` satisfies every timeline invariant; otherwise one message
/// per broken rule.
std::vector<std::string> check_timeline(const ActionTimeline& tl);

/// Throws ValidationError when the pattern does not validate.
ActionTimeline compile_pattern(const StimulusPattern& p);

}  // namespace moheat
