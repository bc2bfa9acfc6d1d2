#include "moheat/service.hpp"

#include "moheat/device.hpp"
#include "moheat/link.hpp"

#include <boost/uuid/uuid.hpp>
#include <boost/uuid/uuid_generators.hpp>
#include <boost/uuid/uuid_io.hpp>

#include <unistd.h>

#include <ctime>
#include <iostream>
#include <thread>

namespace moheat {

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace std::chrono_literals;

ServiceError::ServiceError(int status, std::string code, std::string detail, std::string path)
    : std::runtime_error(std::move(detail)),
      status_(status),
      code_(std::move(code)),
      path_(std::move(path)) {}

json ServiceError::to_json() const {
    json j{{"error", code_}, {"detail", what()}};
    if (!path_.empty()) j["path"] = path_;
    return j;
}

namespace {

ServiceError from_library_error(const LibraryError& e) {
    const int status = e.kind() == LibraryError::Kind::parse ? 400 : 422;
    std::string detail = e.detail();
    if (e.byte_offset()) detail += " (byte " + std::to_string(*e.byte_offset()) + ")";
    return ServiceError(status, std::string(e.code()), detail, e.path());
}

json parse_body(std::string_view body) {
    try {
        return parse_json_strict(body);
    } catch (const LibraryError& e) {
        throw from_library_error(e);
    }
}

void expect_object(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
    if (!j.is_object()) {
        throw ServiceError(422, "schema_violation", "expected an object", path);
    }
    for (const auto& [key, _] : j.items()) {
        if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) ==
            keys.end()) {
            throw ServiceError(422, "schema_violation", "unknown field",
                               path.empty() ? key : path + "." + key);
        }
    }
}

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

LibraryEntry entry_or_throw(const json& j, const std::string& path) {
    try {
        return entry_from_json(j, path);
    } catch (const LibraryError& e) {
        throw from_library_error(e);
    }
}

json status_json(const PlaybackStatus& s) {
    json j{{"state", to_string(s.state)}, {"elapsed_ms", s.elapsed_ms}};
    if (s.next_event_t_ms) j["next_event_t_ms"] = *s.next_event_t_ms;
    return j;
}

json link_json(const LinkHealth& h) {
    json j{{"acks", h.acks}, {"status_replies", h.status_replies}, {"diagnostics", h.diagnostics}};
    j["last_status"] = h.last_status
                           ? json{{"cold_duty", h.last_status->cold_duty},
                                  {"hot_duty", h.last_status->hot_duty}}
                           : json(nullptr);
    if (!h.error.empty()) j["error"] = h.error;
    return j;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t secs = std::chrono::system_clock::to_time_t(now);
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    ::gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

constexpr std::string_view kSerialPrefix = "serial:";

}  // namespace

PlantParams plant_params_from_json(const json& j, PlantParams base, const std::string& path) {
    expect_object(j, path, {"r_h", "r_c", "lambda", "t_neutral_c", "t_min_c", "t_max_c", "dt_ms"});
    auto number = [&](const char* key, double& field) {
        if (!j.contains(key)) return;
        if (!j[key].is_number()) {
            throw ServiceError(422, "schema_violation", "expected a number", join(path, key));
        }
        field = j[key].get<double>();
    };
    number("r_h", base.r_h);
    number("r_c", base.r_c);
    number("lambda", base.lambda);
    number("t_neutral_c", base.t_neutral_c);
    number("t_min_c", base.t_min_c);
    number("t_max_c", base.t_max_c);
    if (j.contains("dt_ms")) {
        if (!j["dt_ms"].is_number_integer()) {
            throw ServiceError(422, "schema_violation", "expected an integer", join(path, "dt_ms"));
        }
        base.dt_ms = j["dt_ms"].get<std::int64_t>();
    }
    if (const auto problems = check_params(base); !problems.empty()) {
        throw ServiceError(422, "validation_failed", problems.front(), path);
    }
    return base;
}

json plant_params_to_json(const PlantParams& p) {
    return json{{"r_h", p.r_h},           {"r_c", p.r_c},         {"lambda", p.lambda},
                {"t_neutral_c", p.t_neutral_c}, {"t_min_c", p.t_min_c}, {"t_max_c", p.t_max_c},
                {"dt_ms", p.dt_ms}};
}

ServiceConfig parse_service_config(const json& j, const fs::path& base_dir) {
    expect_object(j, "", {"listen_address", "port", "library_dir", "plant", "serial_allowlist",
                          "baud", "seed_demos"});
    ServiceConfig c;
    if (j.contains("listen_address")) {
        if (!j["listen_address"].is_string()) {
            throw ServiceError(422, "schema_violation", "expected a string", "listen_address");
        }
        c.listen_address = j["listen_address"].get<std::string>();
    }
    if (j.contains("port")) {
        const auto& v = j["port"];
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0 || v.get<std::int64_t>() > 65535) {
            throw ServiceError(422, "schema_violation", "expected an integer in [0, 65535]", "port");
        }
        c.port = static_cast<std::uint16_t>(v.get<int>());
    }
    if (j.contains("library_dir")) {
        if (!j["library_dir"].is_string()) {
            throw ServiceError(422, "schema_violation", "expected a string", "library_dir");
        }
        fs::path dir = j["library_dir"].get<std::string>();
        c.library_dir = dir.is_relative() && !base_dir.empty() ? base_dir / dir : dir;
    }
    if (j.contains("plant")) c.plant = plant_params_from_json(j["plant"], c.plant, "plant");
    if (j.contains("serial_allowlist")) {
        const auto& list = j["serial_allowlist"];
        if (!list.is_array()) {
            throw ServiceError(422, "schema_violation", "expected an array", "serial_allowlist");
        }
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (!list[i].is_string()) {
                throw ServiceError(422, "schema_violation", "expected a string",
                                   "serial_allowlist[" + std::to_string(i) + "]");
            }
            c.serial_allowlist.push_back(list[i].get<std::string>());
        }
    }
    if (j.contains("baud")) {
        if (!j["baud"].is_number_integer()) {
            throw ServiceError(422, "schema_violation", "expected an integer", "baud");
        }
        c.baud = j["baud"].get<int>();
    }
    if (j.contains("seed_demos")) {
        if (!j["seed_demos"].is_boolean()) {
            throw ServiceError(422, "schema_violation", "expected a boolean", "seed_demos");
        }
        c.seed_demos = j["seed_demos"].get<bool>();
    }
    return c;
}

std::vector<std::string> split_target(std::string_view target) {
    if (const auto q = target.find_first_of("?#"); q != std::string_view::npos) {
        target = target.substr(0, q);
    }
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= target.size()) {
        auto end = target.find('/', pos);
        if (end == std::string_view::npos) end = target.size();
        const auto raw = target.substr(pos, end - pos);
        if (!raw.empty()) {
            std::string seg;
            for (std::size_t i = 0; i < raw.size(); ++i) {
                if (raw[i] != '%') {
                    seg += raw[i];
                    continue;
                }
                if (i + 2 >= raw.size() || hex_value(raw[i + 1]) < 0 || hex_value(raw[i + 2]) < 0) {
                    throw ServiceError(400, "bad_request", "malformed percent escape in path");
                }
                seg += static_cast<char>(hex_value(raw[i + 1]) * 16 + hex_value(raw[i + 2]));
                i += 2;
            }
            out.push_back(std::move(seg));
        }
        pos = end + 1;
    }
    return out;
}

// ---------------------------------------------------------------- telemetry

void TelemetryHub::publish(std::string message) {
    {
        std::lock_guard lock(mutex_);
        if (closed_) return;
        messages_.push_back(std::move(message));
    }
    cv_.notify_all();
}

void TelemetryHub::close(std::string final_message) {
    {
        std::lock_guard lock(mutex_);
        if (closed_) return;
        messages_.push_back(std::move(final_message));
        closed_ = true;
    }
    cv_.notify_all();
}

TelemetryHub::Cursor TelemetryHub::subscribe() const {
    std::lock_guard lock(mutex_);
    if (closed_) return {messages_.size() - 1, messages_.size() - 1};
    return {0, messages_.size()};
}

TelemetryHub::Pull TelemetryHub::pull(Cursor& cursor, std::string& out,
                                      std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return cursor.next < messages_.size(); });
    if (cursor.next < messages_.size()) {
        const std::size_t backlog = messages_.size() - std::max(cursor.next, cursor.joined_at);
        if (backlog > kMaxBacklog) return Pull::dropped;
        out = messages_[cursor.next++];
        return Pull::message;
    }
    return closed_ ? Pull::closed : Pull::timeout;
}

std::size_t TelemetryHub::size() const {
    std::lock_guard lock(mutex_);
    return messages_.size();
}

bool TelemetryHub::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

// ---------------------------------------------------------------- service

std::string Response::text() const { return body.is_null() ? std::string() : canonical_dump(body); }

struct Service::Session {
    std::string id;
    std::string device_id;
    std::optional<std::string> pattern_name;
    LibraryEntry entry;
    std::string created_at;

    std::shared_ptr<TelemetryHub> hub = std::make_shared<TelemetryHub>();
    std::optional<PlaybackSession> playback;
    std::unique_ptr<VirtualDevice> device;
    std::unique_ptr<LinkMonitor> monitor;
    std::jthread finisher;

    ~Session() {
        if (playback) playback->stop();
        if (finisher.joinable()) finisher.join();
        if (device) device->cancel();
    }
};

Service::Service(ServiceConfig config) : config_(std::move(config)), store_(config_.library_dir) {
    if (const auto problems = check_params(config_.plant); !problems.empty()) {
        throw ServiceError(422, "validation_failed", problems.front(), "plant");
    }
    std::error_code ec;
    fs::create_directories(config_.library_dir, ec);
    if (!fs::is_directory(config_.library_dir) || ::access(config_.library_dir.c_str(), W_OK) != 0) {
        throw ServiceError(500, "storage_error",
                           "library_dir " + config_.library_dir.string() +
                               " is not a writable directory");
    }
    for (const auto& problem : store_.load()) {
        std::cerr << "moheat: skipped library file " << problem << "\n";
    }
    if (store_.empty() && config_.seed_demos) {
        for (const auto& [name, entry] : demo_library().patterns) store_.put(name, entry);
    }
}

Service::~Service() { shutdown(); }

void Service::shutdown() {
    std::vector<std::shared_ptr<Session>> sessions;
    {
        std::lock_guard lock(mutex_);
        for (const auto& [_, s] : sessions_) sessions.push_back(s);
    }
    for (const auto& s : sessions) s->playback->stop();
    for (const auto& s : sessions) {
        if (s->finisher.joinable()) s->finisher.join();
    }
}

Response Service::handle(std::string_view method, std::string_view target, std::string_view body) {
    try {
        const auto seg = split_target(target);
        auto allow = [&](std::initializer_list<std::string_view> methods) {
            for (auto m : methods) {
                if (m == method) return;
            }
            throw ServiceError(405, "method_not_allowed",
                               std::string(method) + " is not supported here");
        };
        const std::size_t n = seg.size();
        if (n == 1 && seg[0] == "healthz") {
            allow({"GET"});
            return {200, json{{"status", "ok"}}};
        }
        if (n == 1 && seg[0] == "devices") {
            allow({"GET"});
            return list_devices();
        }
        if (n == 1 && seg[0] == "patterns") {
            allow({"GET"});
            return list_patterns();
        }
        if (n == 2 && seg[0] == "patterns") {
            allow({"GET", "PUT", "DELETE"});
            if (method == "GET") return get_pattern(seg[1]);
            if (method == "PUT") return save_pattern(seg[1], body);
            return delete_pattern(seg[1]);
        }
        if (n == 1 && seg[0] == "simulate") {
            allow({"POST"});
            return simulate(body);
        }
        if (n == 1 && seg[0] == "sessions") {
            allow({"POST"});
            return create_session(body);
        }
        if (n == 2 && seg[0] == "sessions") {
            allow({"GET"});
            return get_session(seg[1]);
        }
        if (n == 3 && seg[0] == "sessions" && seg[2] == "stop") {
            allow({"POST"});
            return stop_session(seg[1]);
        }
        if (n == 3 && seg[0] == "sessions" && seg[2] == "telemetry") {
            if (!find_session(seg[1])) {
                throw ServiceError(404, "not_found", "no session " + seg[1]);
            }
            throw ServiceError(426, "upgrade_required", "telemetry is a WebSocket endpoint");
        }
        throw ServiceError(404, "not_found", "no route for " + std::string(target));
    } catch (const ServiceError& e) {
        return {e.status(), e.to_json()};
    } catch (const LibraryError& e) {
        const auto se = from_library_error(e);
        return {se.status(), se.to_json()};
    } catch (const std::exception& e) {
        return {500, ServiceError(500, "internal_error", e.what()).to_json()};
    }
}

Response Service::list_devices() {
    std::lock_guard lock(mutex_);
    auto busy = [&](const std::string& id) {
        const auto it = active_.find(id);
        if (it == active_.end()) return false;
        return !is_terminal(sessions_.at(it->second)->playback->status().state);
    };
    json out = json::array();
    out.push_back({{"id", "virtual"}, {"kind", "virtual"}, {"available", true}, {"busy", busy("virtual")}});
    for (const auto& path : config_.serial_allowlist) {
        const std::string id = std::string(kSerialPrefix) + path;
        out.push_back({{"id", id},
                       {"kind", "serial"},
                       {"available", serial_port_available(path)},
                       {"busy", busy(id)}});
    }
    return {200, out};
}

Response Service::list_patterns() {
    std::lock_guard lock(mutex_);
    return {200, json(store_.names())};
}

Response Service::get_pattern(const std::string& name) {
    std::lock_guard lock(mutex_);
    const auto entry = store_.get(name);
    if (!entry) throw ServiceError(404, "not_found", "no pattern named \"" + name + "\"");
    return {200, entry_to_json(*entry)};
}

Response Service::save_pattern(const std::string& name, std::string_view body) {
    if (!is_valid_pattern_name(name)) {
        throw ServiceError(422, "invalid_name",
                           "pattern names are 1 to 64 characters of UTF-8 without control characters",
                           "name");
    }
    const LibraryEntry entry = entry_or_throw(parse_body(body), "");
    std::lock_guard lock(mutex_);
    store_.put(name, entry);
    return {200, entry_to_json(entry)};
}

Response Service::delete_pattern(const std::string& name) {
    std::lock_guard lock(mutex_);
    if (!store_.remove(name)) throw ServiceError(404, "not_found", "no pattern named \"" + name + "\"");
    return {204, nullptr};
}

Response Service::simulate(std::string_view body) {
    const json req = parse_body(body);
    expect_object(req, "", {"pattern", "plant"});
    if (!req.contains("pattern")) throw ServiceError(422, "schema_violation", "missing field", "pattern");
    LibraryEntry entry;
    if (req["pattern"].is_string()) {
        const auto name = req["pattern"].get<std::string>();
        std::lock_guard lock(mutex_);
        const auto found = store_.get(name);
        if (!found) throw ServiceError(404, "not_found", "no pattern named \"" + name + "\"", "pattern");
        entry = *found;
    } else {
        entry = entry_or_throw(req["pattern"], "pattern");
    }
    const PlantParams p =
        req.contains("plant") ? plant_params_from_json(req["plant"], config_.plant) : config_.plant;
    const auto tl = compile_pattern(entry.pattern);
    TemperatureTrace trace;
    try {
        trace = run_simulation(tl, p, p.t_neutral_c);
    } catch (const SimulationError& e) {
        throw ServiceError(422, "simulation_error", e.what(), "plant.dt_ms");
    }
    json samples = json::array();
    for (const auto& s : trace.samples) {
        samples.push_back({{"t_ms", s.t_ms},
                           {"temp_c", s.temp_c},
                           {"cold_duty", s.cold_duty},
                           {"hot_duty", s.hot_duty}});
    }
    return {200, json{{"timeline", timeline_to_json(tl)},
                      {"plant", plant_params_to_json(p)},
                      {"trace", {{"dt_ms", trace.dt_ms}, {"samples", std::move(samples)}}}}};
}

json Service::session_record(const Session& s) const {
    json j{{"session_id", s.id},
           {"device_id", s.device_id},
           {"pattern", entry_to_json(s.entry)},
           {"pattern_name", s.pattern_name ? json(*s.pattern_name) : json(nullptr)},
           {"created_at", s.created_at},
           {"status", status_json(s.playback->status())}};
    return j;
}

std::shared_ptr<Service::Session> Service::find_session(const std::string& id) {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

Response Service::create_session(std::string_view body) {
    const json req = parse_body(body);
    expect_object(req, "", {"pattern", "device"});
    if (!req.contains("pattern")) throw ServiceError(422, "schema_violation", "missing field", "pattern");
    std::string device_id = "virtual";
    if (req.contains("device")) {
        if (!req["device"].is_string()) {
            throw ServiceError(422, "schema_violation", "expected a string", "device");
        }
        device_id = req["device"].get<std::string>();
    }

    auto session = std::make_shared<Session>();
    session->device_id = device_id;
    if (!req["pattern"].is_string()) session->entry = entry_or_throw(req["pattern"], "pattern");

    std::string serial_path;
    if (device_id != "virtual") {
        if (device_id.starts_with(kSerialPrefix)) serial_path = device_id.substr(kSerialPrefix.size());
        const auto& allow = config_.serial_allowlist;
        if (serial_path.empty() || std::find(allow.begin(), allow.end(), serial_path) == allow.end()) {
            throw ServiceError(404, "not_found", "no device " + device_id, "device");
        }
    }

    std::lock_guard lock(mutex_);
    if (req["pattern"].is_string()) {
        const auto name = req["pattern"].get<std::string>();
        const auto found = store_.get(name);
        if (!found) throw ServiceError(404, "not_found", "no pattern named \"" + name + "\"", "pattern");
        session->entry = *found;
        session->pattern_name = name;
    }
    if (const auto it = active_.find(device_id); it != active_.end()) {
        if (!is_terminal(sessions_.at(it->second)->playback->status().state)) {
            throw ServiceError(409, "conflict",
                               device_id + " is playing session " + it->second, "device");
        }
    }

    static boost::uuids::random_generator uuid_gen;  // guarded by mutex_
    session->id = boost::uuids::to_string(uuid_gen());
    session->created_at = utc_now();
    const auto tl = compile_pattern(session->entry.pattern);
    auto clock = std::make_shared<SystemClock>();
    auto hub = session->hub;

    if (serial_path.empty()) {
        const PlantParams plant = config_.plant;
        auto link = make_loopback();
        session->device =
            std::make_unique<VirtualDevice>(link.device, clock, plant, plant.t_neutral_c);
        session->playback = play(tl, link.host, clock);
        session->monitor = std::make_unique<LinkMonitor>(link.host);
        PlaybackSession pb = *session->playback;
        session->device->start(
            pb.start_ms(),
            [pb](std::int64_t t) -> std::optional<std::int64_t> {
                const auto progress = pb.wait_dispatched_through(t);
                if (progress.terminal) return progress.end_ms;
                return std::nullopt;
            },
            [pb, hub](const TraceSample& s) {
                hub->publish(canonical_dump(json{{"type", "sample"},
                                                 {"t_ms", s.t_ms},
                                                 {"temp_c", s.temp_c},
                                                 {"cold_duty", s.cold_duty},
                                                 {"hot_duty", s.hot_duty},
                                                 {"state", to_string(pb.status().state)},
                                                 {"source", "simulation"}}));
            });
        VirtualDevice* device = session->device.get();
        session->finisher = std::jthread([pb, hub, device] {
            pb.wait();
            device->wait();
            const auto st = pb.status();
            hub->close(canonical_dump(json{{"type", "status"},
                                           {"final", true},
                                           {"state", to_string(st.state)},
                                           {"elapsed_ms", st.elapsed_ms},
                                           {"source", "simulation"}}));
        });
    } else {
        std::shared_ptr<Transport> port;
        try {
            port = std::make_shared<SerialTransport>(SerialSettings{serial_path, config_.baud});
        } catch (const TransportError& e) {
            throw ServiceError(503, "device_unavailable", e.what(), "device");
        }
        session->playback = play(tl, port, clock);
        session->monitor = std::make_unique<LinkMonitor>(port);
        PlaybackSession pb = *session->playback;
        LinkMonitor* monitor = session->monitor.get();
        session->finisher = std::jthread([pb, hub, monitor] {
            auto link_message = [&](const PlaybackStatus& st, bool final) {
                json j{{"type", final ? "status" : "link"},
                       {"t_ms", st.elapsed_ms},
                       {"state", to_string(st.state)},
                       {"link_health", link_json(monitor->snapshot())}};
                if (final) {
                    j["final"] = true;
                    j["elapsed_ms"] = st.elapsed_ms;
                }
                return canonical_dump(j);
            };
            auto next = std::chrono::steady_clock::now();
            for (;;) {
                const auto st = pb.status();
                if (is_terminal(st.state)) break;
                if (std::chrono::steady_clock::now() >= next) {
                    hub->publish(link_message(st, false));
                    next += 100ms;
                }
                std::this_thread::sleep_for(10ms);
            }
            std::this_thread::sleep_for(50ms);  // let the last acks arrive
            hub->close(link_message(pb.status(), true));
        });
    }

    sessions_[session->id] = session;
    active_[device_id] = session->id;
    return {201, session_record(*session)};
}

Response Service::stop_session(const std::string& id) {
    const auto s = find_session(id);
    if (!s) throw ServiceError(404, "not_found", "no session " + id);
    s->playback->stop();
    json j = status_json(s->playback->status());
    j["session_id"] = id;
    return {200, j};
}

Response Service::get_session(const std::string& id) {
    const auto s = find_session(id);
    if (!s) throw ServiceError(404, "not_found", "no session " + id);
    return {200, session_record(*s)};
}

std::shared_ptr<TelemetryHub> Service::telemetry(const std::string& id) {
    const auto s = find_session(id);
    return s ? s->hub : nullptr;
}

}  // namespace moheat
