#include "moheat/library.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

namespace moheat {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::string join_path(const std::string& base, std::string_view key) {
    if (base.empty()) return std::string(key);
    return base + "." + std::string(key);
}

[[noreturn]] void schema_error(const std::string& path, std::string detail) {
    throw LibraryError(LibraryError::Kind::schema, path, std::move(detail));
}

std::string_view type_label(const json& j) {
    switch (j.type()) {
        case json::value_t::null: return "null";
        case json::value_t::boolean: return "boolean";
        case json::value_t::number_integer:
        case json::value_t::number_unsigned: return "integer";
        case json::value_t::number_float: return "number";
        case json::value_t::string: return "string";
        case json::value_t::array: return "array";
        case json::value_t::object: return "object";
        default: return "value";
    }
}

const json& require(const json& obj, std::string_view key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) schema_error(join_path(path, key), "required field is missing");
    return *it;
}

std::int64_t get_integer(const json& obj, std::string_view key, const std::string& path) {
    const json& v = require(obj, key, path);
    if (v.is_number_unsigned()) {
        const auto u = v.get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
            schema_error(join_path(path, key), "integer out of range");
        }
        return static_cast<std::int64_t>(u);
    }
    if (v.is_number_integer()) return v.get<std::int64_t>();
    schema_error(join_path(path, key),
                 "expected integer, got " + std::string(type_label(v)));
}

double get_number(const json& obj, std::string_view key, const std::string& path) {
    const json& v = require(obj, key, path);
    if (!v.is_number()) {
        schema_error(join_path(path, key), "expected number, got " + std::string(type_label(v)));
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) schema_error(join_path(path, key), "number must be finite");
    return d;
}

std::string get_string(const json& obj, std::string_view key, const std::string& path) {
    const json& v = require(obj, key, path);
    if (!v.is_string()) {
        schema_error(join_path(path, key), "expected string, got " + std::string(type_label(v)));
    }
    return v.get<std::string>();
}

void reject_unknown(const json& obj, const std::set<std::string_view>& allowed,
                    const std::string& path) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) schema_error(join_path(path, key), "unknown field");
    }
}

bool is_css_hex_color(std::string_view s) {
    if (s.size() != 4 && s.size() != 7) return false;
    if (s[0] != '#') return false;
    for (char c : s.substr(1)) {
        if (!std::isxdigit(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

Phase parse_phase(const json& obj, const std::string& path) {
    const std::string s = get_string(obj, "start_phase", path);
    if (s == "cold") return Phase::cold;
    if (s == "hot") return Phase::hot;
    schema_error(join_path(path, "start_phase"), "expected \"cold\" or \"hot\", got \"" + s + "\"");
}

LevelIndex parse_level(const json& obj, const std::string& path) {
    const std::int64_t l = get_integer(obj, "level", path);
    // Out-of-range values are reported by validation, not schema checks.
    const auto clamped = std::clamp<std::int64_t>(l, std::numeric_limits<int>::min(),
                                                  std::numeric_limits<int>::max());
    return {static_cast<int>(clamped)};
}

// Duplicate keys are silently merged by the default parser; this callback
// tracks the keys of every open object and rejects repeats.
class DuplicateKeyGuard {
public:
    bool operator()(int /*depth*/, json::parse_event_t event, json& parsed) {
        switch (event) {
            case json::parse_event_t::object_start:
                frames_.push_back({true, {}, {}});
                break;
            case json::parse_event_t::array_start:
                frames_.push_back({false, {}, {}});
                break;
            case json::parse_event_t::object_end:
            case json::parse_event_t::array_end:
                frames_.pop_back();
                break;
            case json::parse_event_t::key: {
                auto& frame = frames_.back();
                auto key = parsed.get<std::string>();
                if (!frame.keys.insert(key).second) {
                    throw LibraryError(LibraryError::Kind::duplicate, path_to(key),
                                       "duplicate key \"" + key + "\"");
                }
                frame.current = std::move(key);
                break;
            }
            case json::parse_event_t::value:
                break;
        }
        return true;
    }

private:
    struct Frame {
        bool is_object;
        std::set<std::string> keys;
        std::string current;
    };

    std::string path_to(const std::string& key) const {
        std::string path;
        for (std::size_t i = 0; i + 1 < frames_.size(); ++i) {
            if (frames_[i].is_object) path = join_path(path, frames_[i].current);
        }
        return join_path(path, key);
    }

    std::vector<Frame> frames_;
};

}  // namespace

LibraryError::LibraryError(Kind kind, std::string path, std::string detail,
                           std::optional<std::size_t> byte_offset)
    : std::runtime_error(path.empty() ? detail : path + ": " + detail),
      kind_(kind),
      path_(std::move(path)),
      detail_(std::move(detail)),
      byte_offset_(byte_offset) {}

std::string_view LibraryError::code() const {
    switch (kind_) {
        case Kind::parse: return "parse_error";
        case Kind::unsupported_version: return "unsupported_version";
        case Kind::schema: return "schema_violation";
        case Kind::validation: return "validation_failed";
        case Kind::duplicate: return "duplicate_name";
    }
    return "error";
}

bool is_valid_pattern_name(std::string_view name) {
    std::size_t code_points = 0;
    std::size_t i = 0;
    while (i < name.size()) {
        const auto c = static_cast<unsigned char>(name[i]);
        std::size_t len = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            len = 1;
            cp = c;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + len > name.size()) return false;
        for (std::size_t k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(name[i + k]);
            if ((cc & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        // Overlong encodings, surrogates and out-of-range code points.
        static constexpr std::uint32_t kMinForLength[] = {0, 0, 0x80, 0x800, 0x10000};
        if (cp < kMinForLength[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            return false;
        }
        if (cp < 0x20) return false;
        i += len;
        ++code_points;
    }
    return code_points >= 1 && code_points <= kMaxPatternNameChars;
}

json parse_json_strict(std::string_view text) {
    try {
        return json::parse(text.begin(), text.end(), DuplicateKeyGuard{});
    } catch (const json::parse_error& e) {
        std::optional<std::size_t> offset;
        if (e.byte > 0) offset = e.byte - 1;
        throw LibraryError(LibraryError::Kind::parse, "",
                           "malformed JSON at byte " + std::to_string(offset.value_or(0)) + ": " +
                               e.what(),
                           offset);
    }
}

LibraryEntry entry_from_json(const json& j, const std::string& path) {
    if (!j.is_object()) {
        schema_error(path, "expected object, got " + std::string(type_label(j)));
    }
    const std::string type = get_string(j, "type", path);
    static const std::set<std::string_view> kCommon{"type", "description", "color_cue"};
    const auto allow = [&](std::initializer_list<std::string_view> fields) {
        std::set<std::string_view> allowed = kCommon;
        allowed.insert(fields.begin(), fields.end());
        reject_unknown(j, allowed, path);
    };

    LibraryEntry entry;
    if (type == "cold" || type == "hot") {
        allow({"intensity", "duration_ms", "delay_ms"});
        const Intensity u{get_number(j, "intensity", path)};
        const auto duration = get_integer(j, "duration_ms", path);
        const auto delay = get_integer(j, "delay_ms", path);
        if (type == "cold") {
            entry.pattern = ColdPattern{u, duration, delay};
        } else {
            entry.pattern = HotPattern{u, duration, delay};
        }
    } else if (type == "cold_level" || type == "hot_level") {
        allow({"level", "duration_ms", "delay_ms"});
        const LevelIndex level = parse_level(j, path);
        const auto duration = get_integer(j, "duration_ms", path);
        const auto delay = get_integer(j, "delay_ms", path);
        if (type == "cold_level") {
            entry.pattern = ColdLevelPattern{level, duration, delay};
        } else {
            entry.pattern = HotLevelPattern{level, duration, delay};
        }
    } else if (type == "dual") {
        allow({"cold_intensity", "cold_duration_ms", "hot_intensity", "hot_duration_ms", "gap_ms",
               "repeats", "start_phase", "delay_ms"});
        DualPattern d;
        d.cold_intensity = {get_number(j, "cold_intensity", path)};
        d.cold_duration_ms = get_integer(j, "cold_duration_ms", path);
        d.hot_intensity = {get_number(j, "hot_intensity", path)};
        d.hot_duration_ms = get_integer(j, "hot_duration_ms", path);
        d.gap_ms = get_integer(j, "gap_ms", path);
        d.repeats = get_integer(j, "repeats", path);
        d.start_phase = parse_phase(j, path);
        d.delay_ms = get_integer(j, "delay_ms", path);
        entry.pattern = d;
    } else {
        schema_error(join_path(path, "type"),
                     "unknown pattern type \"" + type +
                         "\" (expected cold, cold_level, hot, hot_level or dual)");
    }

    if (j.contains("description")) entry.description = get_string(j, "description", path);
    if (j.contains("color_cue")) {
        entry.color_cue = get_string(j, "color_cue", path);
        if (!is_css_hex_color(*entry.color_cue)) {
            schema_error(join_path(path, "color_cue"), "expected CSS hex color like #1e90ff");
        }
    }

    if (auto report = validate_pattern(entry.pattern); !report.ok()) {
        throw LibraryError(LibraryError::Kind::validation,
                           join_path(path, report.violations.front().field), report.to_string());
    }
    return entry;
}

json entry_to_json(const LibraryEntry& e) {
    json j = json::object();
    j["type"] = std::string(pattern_type_name(e.pattern));
    std::visit(overloaded{
                   [&](const ColdPattern& c) {
                       j["intensity"] = c.intensity.value;
                       j["duration_ms"] = c.duration_ms;
                       j["delay_ms"] = c.delay_ms;
                   },
                   [&](const HotPattern& h) {
                       j["intensity"] = h.intensity.value;
                       j["duration_ms"] = h.duration_ms;
                       j["delay_ms"] = h.delay_ms;
                   },
                   [&](const ColdLevelPattern& c) {
                       j["level"] = c.level.level;
                       j["duration_ms"] = c.duration_ms;
                       j["delay_ms"] = c.delay_ms;
                   },
                   [&](const HotLevelPattern& h) {
                       j["level"] = h.level.level;
                       j["duration_ms"] = h.duration_ms;
                       j["delay_ms"] = h.delay_ms;
                   },
                   [&](const DualPattern& d) {
                       j["cold_intensity"] = d.cold_intensity.value;
                       j["cold_duration_ms"] = d.cold_duration_ms;
                       j["hot_intensity"] = d.hot_intensity.value;
                       j["hot_duration_ms"] = d.hot_duration_ms;
                       j["gap_ms"] = d.gap_ms;
                       j["repeats"] = d.repeats;
                       j["start_phase"] = d.start_phase == Phase::cold ? "cold" : "hot";
                       j["delay_ms"] = d.delay_ms;
                   },
               },
               e.pattern);
    if (e.description) j["description"] = *e.description;
    if (e.color_cue) j["color_cue"] = *e.color_cue;
    return j;
}

PatternLibrary parse_pattern_library(std::string_view text) {
    const json doc = parse_json_strict(text);
    if (!doc.is_object()) schema_error("", "top level must be an object");

    const auto version = get_integer(doc, "schema_version", "");
    if (version != kSchemaVersion) {
        throw LibraryError(LibraryError::Kind::unsupported_version, "schema_version",
                           "unsupported schema_version " + std::to_string(version) +
                               " (this build reads version " + std::to_string(kSchemaVersion) +
                               ")");
    }
    reject_unknown(doc, {"schema_version", "patterns"}, "");
    const json& patterns = require(doc, "patterns", "");
    if (!patterns.is_object()) {
        schema_error("patterns", "expected object, got " + std::string(type_label(patterns)));
    }

    PatternLibrary lib;
    for (const auto& [name, body] : patterns.items()) {
        const std::string path = join_path("patterns", name);
        if (!is_valid_pattern_name(name)) {
            schema_error(path, "pattern names must be 1..64 characters of printable UTF-8");
        }
        lib.patterns.emplace(name, entry_from_json(body, path));
    }
    return lib;
}

std::string canonical_dump(const json& j) {
    // The default object type is an ordered std::map, so keys come out sorted.
    return j.dump(-1, ' ', false, json::error_handler_t::strict);
}

std::string serialize_pattern_library(const PatternLibrary& lib) {
    json doc = json::object();
    doc["schema_version"] = lib.schema_version;
    json patterns = json::object();
    for (const auto& [name, entry] : lib.patterns) patterns[name] = entry_to_json(entry);
    doc["patterns"] = std::move(patterns);
    return canonical_dump(doc);
}

json timeline_to_json(const ActionTimeline& tl) {
    json entries = json::array();
    for (const auto& e : tl.entries) {
        json actions = json::array();
        for (const auto& a : e.actions) {
            switch (a.kind) {
                case Action::Kind::set_cold:
                    actions.push_back({{"action", "set_cold"}, {"intensity", a.intensity.value}});
                    break;
                case Action::Kind::set_hot:
                    actions.push_back({{"action", "set_hot"}, {"intensity", a.intensity.value}});
                    break;
                case Action::Kind::all_off:
                    actions.push_back({{"action", "all_off"}});
                    break;
            }
        }
        entries.push_back({{"t_ms", e.t_ms}, {"actions", std::move(actions)}});
    }
    return {{"entries", std::move(entries)}, {"total_ms", tl.total_ms}};
}

}  // namespace moheat
