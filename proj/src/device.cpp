#include "moheat/device.hpp"

namespace moheat {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

void append(std::vector<std::uint8_t>& out, const protocol::Reply& r) {
    const auto frame = protocol::encode_frame(r);
    out.insert(out.end(), frame.begin(), frame.end());
}

}  // namespace

FeedResult device_feed(const DeviceState& state, std::span<const std::uint8_t> bytes) {
    using namespace protocol;
    const DecodeResult decoded = decode_stream(bytes);
    FeedResult out{state, {}, decoded.consumed};
    auto& s = out.state;
    s.frames_bad += decoded.diagnostics.size();
    for (const auto& m : decoded.messages) {
        std::visit(overloaded{
                       [&](const SetColdDuty& c) {
                           ++s.frames_ok;
                           s.duties.cold = c.duty;
                           append(out.reply, Ack{Opcode::set_cold_duty});
                       },
                       [&](const SetHotDuty& c) {
                           ++s.frames_ok;
                           s.duties.hot = c.duty;
                           append(out.reply, Ack{Opcode::set_hot_duty});
                       },
                       [&](const AllOff&) {
                           ++s.frames_ok;
                           s.duties = {};
                           append(out.reply, Ack{Opcode::all_off});
                       },
                       [&](const Ping&) {
                           ++s.frames_ok;
                           append(out.reply, Ack{Opcode::ping});
                       },
                       [&](const GetStatus&) {
                           ++s.frames_ok;
                           append(out.reply, Status{s.duties.cold, s.duties.hot});
                       },
                       // The device never accepts replies.
                       [&](const Ack&) { ++s.frames_bad; },
                       [&](const Status&) { ++s.frames_bad; },
                   },
                   m);
    }
    return out;
}

std::vector<std::uint8_t> DeviceEmulator::feed(std::span<const std::uint8_t> bytes) {
    pending_.insert(pending_.end(), bytes.begin(), bytes.end());
    FeedResult r = device_feed(state_, pending_);
    state_ = r.state;
    pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(r.consumed));
    return std::move(r.reply);
}

VirtualDevice::VirtualDevice(std::shared_ptr<LoopbackEnd> port, std::shared_ptr<Clock> clock,
                             PlantParams params, double initial_temp_c)
    : port_(std::move(port)),
      clock_(std::move(clock)),
      params_(params),
      initial_temp_c_(initial_temp_c) {
    if (const auto problems = check_params(params_); !problems.empty()) {
        throw SimulationError("invalid plant parameters: " + problems.front());
    }
    trace_.dt_ms = params_.dt_ms;
}

VirtualDevice::~VirtualDevice() { cancel(); }

void VirtualDevice::start(std::int64_t start_ms, HostSync sync, SampleSink sink) {
    clock_->attach();
    worker_ = std::jthread([this, start_ms, sync = std::move(sync),
                            sink = std::move(sink)](std::stop_token stop) mutable {
        run(std::move(stop), start_ms, std::move(sync), std::move(sink));
    });
}

void VirtualDevice::cancel() {
    if (worker_.joinable()) {
        worker_.request_stop();
        worker_.join();
    }
}

TemperatureTrace VirtualDevice::wait() {
    if (worker_.joinable()) worker_.join();
    std::lock_guard lock(mutex_);
    return trace_;
}

DeviceState VirtualDevice::device_state() const {
    std::lock_guard lock(mutex_);
    return emulator_.state();
}

void VirtualDevice::run(std::stop_token stop, std::int64_t start_ms, HostSync sync,
                        SampleSink sink) {
    auto participant = ClockParticipant::adopt(*clock_);
    PlantState plant{initial_temp_c_, 0};
    for (std::int64_t t = 0;; t += params_.dt_ms) {
        if (!clock_->sleep_until(start_ms + t, stop)) return;
        const std::optional<std::int64_t> host_end = sync(t);

        TraceSample sample;
        std::vector<std::uint8_t> reply;
        {
            std::lock_guard lock(mutex_);
            reply = emulator_.feed(port_->drain());
            const Duties duties = emulator_.state().duties;
            sample = {t, plant.temp_c, duties.cold, duties.hot};
            trace_.samples.push_back(sample);
            plant = plant_step(plant, duties, params_);
        }
        if (!reply.empty()) {
            try {
                port_->write(reply);
            } catch (const TransportError&) {
                // Host end closed; telemetry and stepping carry on.
            }
        }
        if (sink) sink(sample);
        if (host_end && *host_end <= t) return;
    }
}

}  // namespace moheat
