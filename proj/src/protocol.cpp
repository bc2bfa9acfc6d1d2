#include "moheat/protocol.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace moheat::protocol {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::string hex_byte(std::uint8_t b) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%02X", b);
    return buf;
}

// Expected payload size per opcode; nullopt for undefined opcodes.
std::optional<std::size_t> payload_size(std::uint8_t op) {
    switch (op) {
        case 0x01:
        case 0x02:
        case 0x06: return 1;
        case 0x03:
        case 0x04:
        case 0x05: return 0;
        case 0x07: return 2;
        default: return std::nullopt;
    }
}

}  // namespace

bool is_command_opcode(std::uint8_t op) { return op >= 0x01 && op <= 0x05; }

Message to_message(const Command& c) {
    return std::visit([](const auto& v) -> Message { return v; }, c);
}

Message to_message(const Reply& r) {
    return std::visit([](const auto& v) -> Message { return v; }, r);
}

Opcode opcode_of(const Message& m) {
    return std::visit(overloaded{
                          [](const SetColdDuty&) { return Opcode::set_cold_duty; },
                          [](const SetHotDuty&) { return Opcode::set_hot_duty; },
                          [](const AllOff&) { return Opcode::all_off; },
                          [](const Ping&) { return Opcode::ping; },
                          [](const GetStatus&) { return Opcode::get_status; },
                          [](const Ack&) { return Opcode::ack; },
                          [](const Status&) { return Opcode::status; },
                      },
                      m);
}

bool is_command(const Message& m) {
    return is_command_opcode(static_cast<std::uint8_t>(opcode_of(m)));
}

std::string describe(const Message& m) {
    return std::visit(
        overloaded{
            [](const SetColdDuty& c) { return "SetColdDuty " + std::to_string(c.duty); },
            [](const SetHotDuty& c) { return "SetHotDuty " + std::to_string(c.duty); },
            [](const AllOff&) { return std::string("AllOff"); },
            [](const Ping&) { return std::string("Ping"); },
            [](const GetStatus&) { return std::string("GetStatus"); },
            [](const Ack& a) {
                return "Ack " + hex_byte(static_cast<std::uint8_t>(a.echoed_opcode));
            },
            [](const Status& s) {
                return "Status cold=" + std::to_string(s.cold_duty) +
                       " hot=" + std::to_string(s.hot_duty);
            },
        },
        m);
}

std::uint8_t checksum(std::uint8_t opcode, std::span<const std::uint8_t> payload) {
    auto sum = static_cast<std::uint8_t>(opcode ^ static_cast<std::uint8_t>(payload.size()));
    for (auto b : payload) sum ^= b;
    return sum;
}

std::vector<std::uint8_t> encode_frame(const Message& m) {
    std::vector<std::uint8_t> payload = std::visit(
        overloaded{
            [](const SetColdDuty& c) { return std::vector<std::uint8_t>{c.duty}; },
            [](const SetHotDuty& c) { return std::vector<std::uint8_t>{c.duty}; },
            [](const Ack& a) {
                return std::vector<std::uint8_t>{static_cast<std::uint8_t>(a.echoed_opcode)};
            },
            [](const Status& s) { return std::vector<std::uint8_t>{s.cold_duty, s.hot_duty}; },
            [](const auto&) { return std::vector<std::uint8_t>{}; },
        },
        m);
    const auto op = static_cast<std::uint8_t>(opcode_of(m));
    std::vector<std::uint8_t> frame;
    frame.reserve(kHeaderSize + payload.size() + 1);
    frame.push_back(kStartOfFrame);
    frame.push_back(op);
    frame.push_back(static_cast<std::uint8_t>(payload.size()));
    frame.insert(frame.end(), payload.begin(), payload.end());
    frame.push_back(checksum(op, payload));
    return frame;
}

std::vector<std::uint8_t> encode_frame(const Command& c) { return encode_frame(to_message(c)); }
std::vector<std::uint8_t> encode_frame(const Reply& r) { return encode_frame(to_message(r)); }

std::string describe(const Diagnostic& d) {
    std::string kind;
    switch (d.kind) {
        case Diagnostic::Kind::checksum_mismatch: kind = "checksum mismatch"; break;
        case Diagnostic::Kind::length_overflow: kind = "length overflow"; break;
        case Diagnostic::Kind::unknown_opcode: kind = "unknown opcode"; break;
        case Diagnostic::Kind::bad_payload: kind = "bad payload"; break;
    }
    return kind + " at offset " + std::to_string(d.offset) + ": " + d.detail;
}

DecodeResult decode_stream(std::span<const std::uint8_t> buf) {
    DecodeResult out;
    std::size_t i = 0;
    const std::size_t n = buf.size();
    while (i < n) {
        if (buf[i] != kStartOfFrame) {
            ++i;
            continue;
        }
        if (n - i < kHeaderSize) break;
        const std::uint8_t op = buf[i + 1];
        const std::uint8_t len = buf[i + 2];
        if (len > kMaxPayload) {
            out.diagnostics.push_back({Diagnostic::Kind::length_overflow, i,
                                       "declared length " + std::to_string(len) + " exceeds " +
                                           std::to_string(kMaxPayload)});
            ++i;
            continue;
        }
        const std::size_t frame_size = kHeaderSize + len + 1;
        if (n - i < frame_size) break;

        const auto payload = buf.subspan(i + kHeaderSize, len);
        const std::uint8_t expected = checksum(op, payload);
        const std::uint8_t actual = buf[i + kHeaderSize + len];
        if (expected != actual) {
            out.diagnostics.push_back({Diagnostic::Kind::checksum_mismatch, i,
                                       "expected " + hex_byte(expected) + ", got " +
                                           hex_byte(actual)});
            ++i;
            continue;
        }

        const auto want = payload_size(op);
        if (!want) {
            out.diagnostics.push_back(
                {Diagnostic::Kind::unknown_opcode, i, "opcode " + hex_byte(op)});
        } else if (*want != len) {
            out.diagnostics.push_back({Diagnostic::Kind::bad_payload, i,
                                       "opcode " + hex_byte(op) + " carries " +
                                           std::to_string(*want) + " payload bytes, frame has " +
                                           std::to_string(len)});
        } else {
            switch (static_cast<Opcode>(op)) {
                case Opcode::set_cold_duty: out.messages.emplace_back(SetColdDuty{payload[0]}); break;
                case Opcode::set_hot_duty: out.messages.emplace_back(SetHotDuty{payload[0]}); break;
                case Opcode::all_off: out.messages.emplace_back(AllOff{}); break;
                case Opcode::ping: out.messages.emplace_back(Ping{}); break;
                case Opcode::get_status: out.messages.emplace_back(GetStatus{}); break;
                case Opcode::ack:
                    if (is_command_opcode(payload[0])) {
                        out.messages.emplace_back(Ack{static_cast<Opcode>(payload[0])});
                    } else {
                        out.diagnostics.push_back({Diagnostic::Kind::bad_payload, i,
                                                   "ack echoes non-command opcode " +
                                                       hex_byte(payload[0])});
                    }
                    break;
                case Opcode::status:
                    out.messages.emplace_back(Status{payload[0], payload[1]});
                    break;
            }
        }
        i += frame_size;
    }
    out.consumed = i;
    return out;
}

DecodeResult StreamDecoder::feed(std::span<const std::uint8_t> chunk) {
    pending_.insert(pending_.end(), chunk.begin(), chunk.end());
    DecodeResult result = decode_stream(pending_);
    for (auto& d : result.diagnostics) d.offset += base_offset_;
    pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(result.consumed));
    base_offset_ += result.consumed;
    return result;
}

std::uint8_t intensity_to_duty(Intensity u) {
    if (!(u.value >= 0.0 && u.value <= 1.0)) {
        throw std::domain_error("intensity must be within [0, 1], got " + std::to_string(u.value));
    }
    return static_cast<std::uint8_t>(std::round(u.value * 255.0));
}

double duty_to_drive(std::uint8_t duty) { return static_cast<double>(duty) / 255.0; }

std::vector<Command> actions_to_commands(const TimedActionSet& step) {
    std::vector<Command> out;
    out.reserve(step.actions.size());
    for (const auto& a : step.actions) {
        switch (a.kind) {
            case Action::Kind::set_cold: out.emplace_back(SetColdDuty{intensity_to_duty(a.intensity)}); break;
            case Action::Kind::set_hot: out.emplace_back(SetHotDuty{intensity_to_duty(a.intensity)}); break;
            case Action::Kind::all_off: out.emplace_back(AllOff{}); break;
        }
    }
    return out;
}

}  // namespace moheat::protocol
