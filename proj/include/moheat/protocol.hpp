#pragma once

// Host <-> device serial framing.
//
//   +------+--------+--------+-------------+----------+
//   | 0xAA | opcode | length | payload ... | checksum |
//   +------+--------+--------+-------------+----------+
//
// length is the payload byte count (0..16); checksum is the XOR of opcode,
// length and every payload byte. Multi-byte payload fields, should any be
// added, are little-endian. See docs/protocol.md.

#include "moheat/pattern.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace moheat::protocol {

inline constexpr std::uint8_t kStartOfFrame = 0xAA;
inline constexpr std::size_t kMaxPayload = 16;
inline constexpr std::size_t kHeaderSize = 3;  // SOF, opcode, length

enum class Opcode : std::uint8_t {
    set_cold_duty = 0x01,
    set_hot_duty = 0x02,
    all_off = 0x03,
    ping = 0x04,
    get_status = 0x05,
    ack = 0x06,
    status = 0x07,
};

bool is_command_opcode(std::uint8_t op);

struct SetColdDuty {
    std::uint8_t duty = 0;
    friend bool operator==(const SetColdDuty&, const SetColdDuty&) = default;
};
struct SetHotDuty {
    std::uint8_t duty = 0;
    friend bool operator==(const SetHotDuty&, const SetHotDuty&) = default;
};
struct AllOff {
    friend bool operator==(const AllOff&, const AllOff&) = default;
};
struct Ping {
    friend bool operator==(const Ping&, const Ping&) = default;
};
struct GetStatus {
    friend bool operator==(const GetStatus&, const GetStatus&) = default;
};
struct Ack {
    Opcode echoed_opcode = Opcode::ping;  // always a command opcode
    friend bool operator==(const Ack&, const Ack&) = default;
};
struct Status {
    std::uint8_t cold_duty = 0;
    std::uint8_t hot_duty = 0;
    friend bool operator==(const Status&, const Status&) = default;
};

using Command = std::variant<SetColdDuty, SetHotDuty, AllOff, Ping, GetStatus>;
using Reply = std::variant<Ack, Status>;
/// Anything that can travel in a frame, in either direction.
using Message = std::variant<SetColdDuty, SetHotDuty, AllOff, Ping, GetStatus, Ack, Status>;

Message to_message(const Command& c);
Message to_message(const Reply& r);
Opcode opcode_of(const Message& m);
bool is_command(const Message& m);

/// Human-readable one-liner, e.g. "SetColdDuty 255" or "AllOff".
std::string describe(const Message& m);

std::uint8_t checksum(std::uint8_t opcode, std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> encode_frame(const Message& m);
std::vector<std::uint8_t> encode_frame(const Command& c);
std::vector<std::uint8_t> encode_frame(const Reply& r);

struct Diagnostic {
    enum class Kind {
        checksum_mismatch,  // scanning resumes one byte after the bad SOF
        length_overflow,    // declared length > 16; resumes one byte after the SOF
        unknown_opcode,     // frame skipped whole
        bad_payload,        // wrong length or field value for the opcode; skipped whole
    };

    Kind kind;
    std::size_t offset;  // byte offset of the frame's SOF in the decoded buffer
    std::string detail;
};

std::string describe(const Diagnostic& d);

struct DecodeResult {
    std::vector<Message> messages;
    std::size_t consumed = 0;  // excludes a trailing incomplete frame
    std::vector<Diagnostic> diagnostics;
};

/// Never fails; malformed input shows up only in diagnostics.
DecodeResult decode_stream(std::span<const std::uint8_t> buffer);

/// Accumulating decoder for a byte stream that arrives in arbitrary chunks.
/// Single owner: feed it from one context at a time.
class StreamDecoder {
public:
    /// Decodes everything completed by `chunk`; diagnostic offsets are
    /// relative to the start of the whole stream.
    DecodeResult feed(std::span<const std::uint8_t> chunk);

    std::size_t pending_bytes() const { return pending_.size(); }
    std::size_t stream_offset() const { return base_offset_; }

private:
    std::vector<std::uint8_t> pending_;
    std::size_t base_offset_ = 0;
};

/// round(u * 255), ties away from zero. Throws std::domain_error outside [0, 1].
std::uint8_t intensity_to_duty(Intensity u);

/// Inverse used by the plant model: duty / 255.
double duty_to_drive(std::uint8_t duty);

std::vector<Command> actions_to_commands(const TimedActionSet& step);

}  // namespace moheat::protocol
