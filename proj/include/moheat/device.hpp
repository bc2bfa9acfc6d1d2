#pragma once

// Virtual thermal device: a firmware emulator that speaks the wire protocol,
// plus a runner that steps the skin-temperature plant with the emulator's
// duty registers.

#include "moheat/clock.hpp"
#include "moheat/plant.hpp"
#include "moheat/protocol.hpp"
#include "moheat/transport.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <thread>
#include <vector>

namespace moheat {

struct DeviceState {
    Duties duties;
    std::uint64_t frames_ok = 0;
    std::uint64_t frames_bad = 0;

    friend bool operator==(const DeviceState&, const DeviceState&) = default;
};

struct FeedResult {
    DeviceState state;
    std::vector<std::uint8_t> reply;
    std::size_t consumed = 0;  // a trailing partial frame is left for the next feed
};

/// One pass of the firmware loop over `bytes`. Set commands and AllOff are
/// acknowledged, Ping is acknowledged, GetStatus answers with a Status frame.
/// Corrupt frames and frames the device does not accept (replies) bump
/// frames_bad and produce no output.
FeedResult device_feed(const DeviceState& state, std::span<const std::uint8_t> bytes);

/// device_feed with the partial-frame remainder carried between calls.
class DeviceEmulator {
public:
    std::vector<std::uint8_t> feed(std::span<const std::uint8_t> bytes);
    const DeviceState& state() const { return state_; }

private:
    DeviceState state_;
    std::vector<std::uint8_t> pending_;
};

/// Blocks until host commands due at or before `t_ms` are on the wire.
/// Returns the playback end offset once the host has finished, nullopt while
/// it is still running.
using HostSync = std::function<std::optional<std::int64_t>(std::int64_t t_ms)>;
using SampleSink = std::function<void(const TraceSample&)>;

/// Steps the plant on `clock` every dt_ms from `start_ms`, feeding whatever
/// arrived on `port` into the emulator before each sample. Stops after the
/// first sample at or past the host's end time.
class VirtualDevice {
public:
    VirtualDevice(std::shared_ptr<LoopbackEnd> port, std::shared_ptr<Clock> clock,
                  PlantParams params, double initial_temp_c);
    ~VirtualDevice();
    VirtualDevice(const VirtualDevice&) = delete;
    VirtualDevice& operator=(const VirtualDevice&) = delete;

    void start(std::int64_t start_ms, HostSync sync, SampleSink sink = {});
    /// Cancels the stepping loop.
    void cancel();
    /// Joins the stepping loop and returns the recorded trace.
    TemperatureTrace wait();

    DeviceState device_state() const;

private:
    void run(std::stop_token stop, std::int64_t start_ms, HostSync sync, SampleSink sink);

    std::shared_ptr<LoopbackEnd> port_;
    std::shared_ptr<Clock> clock_;
    PlantParams params_;
    double initial_temp_c_;
    mutable std::mutex mutex_;
    DeviceEmulator emulator_;
    TemperatureTrace trace_;
    std::jthread worker_;
};

}  // namespace moheat
