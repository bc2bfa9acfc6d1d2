#pragma once

// Pattern-library persistence (`.moheat.json`, schema_version 1).
//
// Documents are strict: unknown fields, duplicate keys and wrong JSON types
// are rejected with the JSON path of the offending value. Serialization is
// canonical (sorted keys, compact, shortest round-trip numbers), so
// serialize(parse(serialize(x))) == serialize(x).

#include "moheat/pattern.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace moheat {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kMaxPatternNameChars = 64;
inline constexpr std::string_view kLibraryExtension = ".moheat.json";

struct LibraryEntry {
    StimulusPattern pattern;
    std::optional<std::string> description;
    std::optional<std::string> color_cue;  // CSS hex color, UI metadata only

    friend bool operator==(const LibraryEntry&, const LibraryEntry&) = default;
};

struct PatternLibrary {
    int schema_version = kSchemaVersion;
    std::map<std::string, LibraryEntry> patterns;

    friend bool operator==(const PatternLibrary&, const PatternLibrary&) = default;
};

class LibraryError : public std::runtime_error {
public:
    enum class Kind { parse, unsupported_version, schema, validation, duplicate };

    LibraryError(Kind kind, std::string path, std::string detail,
                 std::optional<std::size_t> byte_offset = std::nullopt);

    Kind kind() const { return kind_; }
    /// Dotted JSON path of the offending value ("patterns.x.intensity"); empty for parse errors.
    const std::string& path() const { return path_; }
    const std::string& detail() const { return detail_; }
    std::optional<std::size_t> byte_offset() const { return byte_offset_; }
    /// Stable machine-readable code, e.g. "validation_failed".
    std::string_view code() const;

private:
    Kind kind_;
    std::string path_;
    std::string detail_;
    std::optional<std::size_t> byte_offset_;
};

/// Non-empty, at most 64 code points, valid UTF-8.
bool is_valid_pattern_name(std::string_view name);

/// Parses JSON text with duplicate-key detection. Throws LibraryError(parse|duplicate).
nlohmann::json parse_json_strict(std::string_view text);

PatternLibrary parse_pattern_library(std::string_view text);
std::string serialize_pattern_library(const PatternLibrary& lib);

/// Single pattern object ({"type": ..., fields..., optional description/color_cue}).
/// `path` prefixes error paths. Throws LibraryError(schema|validation).
LibraryEntry entry_from_json(const nlohmann::json& j, const std::string& path = "");
nlohmann::json entry_to_json(const LibraryEntry& e);

nlohmann::json timeline_to_json(const ActionTimeline& tl);

/// Canonical text form of a JSON value (sorted keys, compact).
std::string canonical_dump(const nlohmann::json& j);

}  // namespace moheat
