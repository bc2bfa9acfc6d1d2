#pragma once

// Local control service: pattern library on disk, simulation preview,
// playback sessions on virtual or serial devices, telemetry fan-out.
//
// Service::handle is transport-agnostic; http_server.hpp puts it on a socket.

#include "moheat/library.hpp"
#include "moheat/plant.hpp"
#include "moheat/scheduler.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace moheat {

struct ServiceConfig {
    std::string listen_address = "127.0.0.1";
    std::uint16_t port = 8787;
    std::filesystem::path library_dir = "library";
    PlantParams plant;
    std::vector<std::string> serial_allowlist;  // tty paths
    int baud = 115200;
    bool seed_demos = true;  // populate an empty library with the bundled demos
};

/// Error with an HTTP status and a stable code; rendered as
/// {"error": code, "detail": ..., "path": ...}.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, std::string code, std::string detail, std::string path = {});

    int status() const { return status_; }
    const std::string& code() const { return code_; }
    const std::string& path() const { return path_; }
    nlohmann::json to_json() const;

private:
    int status_;
    std::string code_;
    std::string path_;
};

/// Overrides on top of `base`; unknown keys and bad values throw ServiceError (422).
PlantParams plant_params_from_json(const nlohmann::json& j, PlantParams base,
                                   const std::string& path = "plant");
nlohmann::json plant_params_to_json(const PlantParams& p);

/// Reads a ServiceConfig JSON document. Relative library_dir is resolved
/// against `base_dir`. Throws ServiceError (422) on bad content.
ServiceConfig parse_service_config(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir = {});

/// The three bundled demo patterns.
PatternLibrary demo_library();

/// One `.moheat.json` file per pattern, written with temp-file + fsync + rename.
class PatternStore {
public:
    explicit PatternStore(std::filesystem::path dir);

    /// Loads every pattern file. Unreadable files are skipped and returned
    /// as "<file>: <reason>" strings.
    std::vector<std::string> load();

    std::vector<std::string> names() const;
    std::optional<LibraryEntry> get(const std::string& name) const;
    void put(const std::string& name, const LibraryEntry& entry);
    bool remove(const std::string& name);
    bool empty() const { return entries_.empty(); }

    std::filesystem::path file_for(const std::string& name) const;
    const std::filesystem::path& dir() const { return dir_; }

    /// Called between the fsync of the temp file and the rename. Tests use
    /// it to simulate a crash at the commit point.
    std::function<void(const std::filesystem::path& temp, const std::filesystem::path& target)>
        before_rename;

private:
    std::filesystem::path dir_;
    std::map<std::string, LibraryEntry> entries_;
};

/// File name for a pattern: ASCII other than [A-Za-z0-9_-] is percent-encoded,
/// UTF-8 is kept; names too long for the filesystem get a hash suffix. The
/// pattern name itself is read back from the file content.
std::string pattern_file_name(const std::string& name);

/// Append-only message log with cursors. Late subscribers to a live session
/// start from the first message; subscribers to a closed hub see only the
/// final message.
class TelemetryHub {
public:
    static constexpr std::size_t kMaxBacklog = 256;

    struct Cursor {
        std::size_t next = 0;
        std::size_t joined_at = 0;
    };
    enum class Pull { message, timeout, closed, dropped };

    void publish(std::string message);
    /// Publishes the final message and closes the hub.
    void close(std::string final_message);

    Cursor subscribe() const;
    /// Waits up to `timeout` for the next message. A subscriber with more than
    /// kMaxBacklog undelivered messages published after it joined is dropped.
    Pull pull(Cursor& cursor, std::string& out, std::chrono::milliseconds timeout) const;

    std::size_t size() const;
    bool closed() const;

private:
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::vector<std::string> messages_;
    bool closed_ = false;
};

struct Response {
    int status = 200;
    nlohmann::json body;  // null means no body

    std::string text() const;
};

class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Routes one request. `target` is the raw request target (path and
    /// optional query). Never throws.
    Response handle(std::string_view method, std::string_view target, std::string_view body);

    Response list_devices();
    Response list_patterns();
    Response get_pattern(const std::string& name);
    Response save_pattern(const std::string& name, std::string_view body);
    Response delete_pattern(const std::string& name);
    Response simulate(std::string_view body);
    Response create_session(std::string_view body);
    Response stop_session(const std::string& id);
    Response get_session(const std::string& id);

    /// Telemetry hub of a session, or nullptr if the id is unknown.
    std::shared_ptr<TelemetryHub> telemetry(const std::string& id);

    /// Stops every live session (each leaves its device all-off).
    void shutdown();

    const ServiceConfig& config() const { return config_; }
    PatternStore& store() { return store_; }

    struct Session;

private:
    nlohmann::json session_record(const Session& s) const;
    std::shared_ptr<Session> find_session(const std::string& id);

    ServiceConfig config_;
    std::mutex mutex_;  // coordinator: library and session table
    PatternStore store_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::map<std::string, std::string> active_;  // device_id -> session_id
};

/// Splits a request target into percent-decoded path segments. Throws
/// ServiceError (400) on malformed escapes.
std::vector<std::string> split_target(std::string_view target);

}  // namespace moheat
