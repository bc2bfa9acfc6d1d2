// moheat: compile, simulate, play, decode and serve from the command line.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

#include "moheat/device.hpp"
#include "moheat/http_server.hpp"
#include "moheat/library.hpp"
#include "moheat/link.hpp"
#include "moheat/plant.hpp"
#include "moheat/protocol.hpp"
#include "moheat/scheduler.hpp"
#include "moheat/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace {

using namespace moheat;
using namespace std::chrono_literals;

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct Exit {
    int code;
};

volatile std::sig_atomic_t g_interrupted = 0;
extern "C" void on_signal(int) { g_interrupted = 1; }

[[noreturn]] void fail(int code, const std::string& message) {
    std::cerr << "moheat: " << message << "\n";
    throw Exit{code};
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(kRuntime, "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

[[noreturn]] void report(const LibraryError& e, const std::string& file) {
    // Validation details already lead with the field name.
    const bool named = !e.path().empty() && e.detail().find(e.path().substr(e.path().rfind('.') + 1)) == 0;
    std::string where = e.path().empty() || named ? "" : " at " + e.path();
    if (e.byte_offset()) where += " (byte " + std::to_string(*e.byte_offset()) + ")";
    fail(kUsage, file + ": " + std::string(e.code()) + where + ": " + e.detail());
}

// A pattern file is either one pattern object or a library holding exactly one pattern.
LibraryEntry load_pattern(const std::string& file) {
    const std::string text = read_text(file);
    try {
        const auto j = parse_json_strict(text);
        if (j.is_object() && j.contains("schema_version")) {
            const auto lib = parse_pattern_library(text);
            if (lib.patterns.size() != 1) {
                fail(kUsage, file + ": library holds " + std::to_string(lib.patterns.size()) +
                                 " patterns; expected exactly one");
            }
            return lib.patterns.begin()->second;
        }
        return entry_from_json(j);
    } catch (const LibraryError& e) {
        report(e, file);
    }
}

void write_output(const std::string& target, const std::string& data) {
    if (target.empty() || target == "-") {
        std::cout << data << std::flush;
        return;
    }
    std::ofstream out(target, std::ios::binary);
    if (!out) fail(kRuntime, "cannot write " + target);
    out << data;
    if (!out.flush()) fail(kRuntime, "cannot write " + target);
}

int cmd_compile(const std::string& file, const std::string& out) {
    const auto entry = load_pattern(file);
    write_output(out, canonical_dump(timeline_to_json(compile_pattern(entry.pattern))) + "\n");
    return kOk;
}

int cmd_simulate(const std::string& file, const PlantParams& p, const std::string& csv) {
    const auto entry = load_pattern(file);
    if (const auto problems = check_params(p); !problems.empty()) fail(kUsage, problems.front());
    TemperatureTrace trace;
    try {
        trace = run_simulation(compile_pattern(entry.pattern), p, p.t_neutral_c);
    } catch (const SimulationError& e) {
        fail(kUsage, e.what());
    }
    write_output(csv, trace_to_csv(trace));
    return kOk;
}

int cmd_play(const std::string& file, const std::string& device, const PlantParams& p) {
    const auto entry = load_pattern(file);
    const auto tl = compile_pattern(entry.pattern);
    auto clock = std::make_shared<SystemClock>();

    std::shared_ptr<Transport> host;
    std::unique_ptr<VirtualDevice> virtual_device;
    std::shared_ptr<LoopbackEnd> device_end;
    if (device == "virtual") {
        auto link = make_loopback();
        host = link.host;
        device_end = link.device;
        virtual_device = std::make_unique<VirtualDevice>(device_end, clock, p, p.t_neutral_c);
    } else if (device.starts_with("serial:")) {
        try {
            host = std::make_shared<SerialTransport>(SerialSettings{device.substr(7)});
        } catch (const TransportError& e) {
            fail(kRuntime, e.what());
        }
    } else {
        fail(kUsage, "--device must be virtual or serial:<path>");
    }

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    auto session = play(tl, host, clock);
    LinkMonitor monitor(host);
    if (virtual_device) {
        virtual_device->start(session.start_ms(), [session](std::int64_t t) {
            const auto progress = session.wait_dispatched_through(t);
            return progress.terminal ? std::optional(progress.end_ms) : std::nullopt;
        });
    }
    while (!is_terminal(session.status().state)) {
        if (g_interrupted) {
            session.stop();
            break;
        }
        std::this_thread::sleep_for(10ms);
    }
    const auto log = session.wait();
    const auto status = session.status();
    std::this_thread::sleep_for(50ms);  // late acks
    monitor.stop();
    const auto health = monitor.snapshot();

    std::cout << "state " << to_string(status.state) << "\n"
              << "elapsed_ms " << status.elapsed_ms << "\n"
              << "frames_sent " << session.frames_sent() << "\n"
              << "acks " << health.acks << "\n";
    if (virtual_device) {
        const auto trace = virtual_device->wait();
        double peak = trace.samples.front().temp_c;
        double trough = peak;
        for (const auto& s : trace.samples) {
            peak = std::max(peak, s.temp_c);
            trough = std::min(trough, s.temp_c);
        }
        char line[128];
        std::snprintf(line, sizeof line, "samples %zu\nfinal_temp_c %.4f\nmin_temp_c %.4f\nmax_temp_c %.4f\n",
                      trace.samples.size(), trace.samples.back().temp_c, trough, peak);
        std::cout << line;
    }
    if (!log.error.empty()) std::cerr << "moheat: " << log.error << "\n";
    if (g_interrupted || status.state != PlaybackState::done) return kRuntime;
    return kOk;
}

std::vector<std::uint8_t> parse_hex(const std::vector<std::string>& parts) {
    std::string digits;
    for (const auto& part : parts) {
        for (char c : part) {
            if (std::isspace(static_cast<unsigned char>(c))) continue;
            if (!std::isxdigit(static_cast<unsigned char>(c))) {
                fail(kUsage, std::string("not a hex digit: '") + c + "'");
            }
            digits += c;
        }
    }
    if (digits.size() % 2 != 0) fail(kUsage, "odd number of hex digits");
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < digits.size(); i += 2) {
        out.push_back(static_cast<std::uint8_t>(std::stoi(digits.substr(i, 2), nullptr, 16)));
    }
    return out;
}

int cmd_decode(const std::vector<std::string>& hex) {
    const auto bytes = parse_hex(hex);
    protocol::StreamDecoder decoder;
    // One byte at a time keeps frames and diagnostics in stream order.
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const auto r = decoder.feed(std::span(bytes).subspan(i, 1));
        for (const auto& d : r.diagnostics) std::cout << "error: " << protocol::describe(d) << "\n";
        for (const auto& m : r.messages) std::cout << protocol::describe(m) << "\n";
    }
    if (decoder.pending_bytes() > 0) {
        std::cout << "error: incomplete frame: " << decoder.pending_bytes() << " trailing bytes\n";
    }
    return kOk;
}

int cmd_serve(const std::string& config_file, std::optional<int> port,
              const std::string& library) {
    ServiceConfig config;
    try {
        if (!config_file.empty()) {
            const auto j = parse_json_strict(read_text(config_file));
            config = parse_service_config(j, std::filesystem::path(config_file).parent_path());
        }
    } catch (const LibraryError& e) {
        report(e, config_file);
    } catch (const ServiceError& e) {
        fail(kUsage, config_file + ": " + e.code() + (e.path().empty() ? "" : " at " + e.path()) +
                         ": " + e.what());
    }
    if (port) config.port = static_cast<std::uint16_t>(*port);
    if (!library.empty()) config.library_dir = library;

    // Block the stop signals in every thread; the main thread waits for them.
    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

    std::unique_ptr<Service> service;
    std::unique_ptr<HttpServer> server;
    try {
        service = std::make_unique<Service>(config);
        server = std::make_unique<HttpServer>(*service, config.listen_address, config.port);
    } catch (const std::exception& e) {
        fail(kRuntime, e.what());
    }
    server->start();
    std::cerr << "moheat: serving on http://" << config.listen_address << ":" << server->port()
              << " with library " << config.library_dir.string() << "\n";
    int sig = 0;
    sigwait(&stop_signals, &sig);
    std::cerr << "moheat: shutting down\n";
    server->stop();
    service->shutdown();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MoHeat thermal-feedback toolkit"};
    app.require_subcommand(1);

    std::string file;
    std::string out;
    std::string csv = "-";
    std::string device = "virtual";
    PlantParams plant;
    std::vector<std::string> hex;
    std::string config_file;
    std::string library;
    int port = 8787;

    auto* compile = app.add_subcommand("compile", "Print the compiled action timeline as JSON");
    compile->add_option("pattern", file, "Pattern JSON file")->required();
    compile->add_option("--out", out, "Write the timeline here instead of stdout");

    auto* simulate = app.add_subcommand("simulate", "Write the simulated temperature trace as CSV");
    simulate->add_option("pattern", file, "Pattern JSON file")->required();
    simulate->add_option("--dt", plant.dt_ms, "Integration step in ms")->capture_default_str();
    simulate->add_option("--lambda", plant.lambda, "Relaxation rate, 1/s")->capture_default_str();
    simulate->add_option("--neutral", plant.t_neutral_c, "Neutral skin temperature, degC")
        ->capture_default_str();
    simulate->add_option("--csv", csv, "Output file, - for stdout")->capture_default_str();

    auto* playc = app.add_subcommand("play", "Play a pattern on a device in real time");
    playc->add_option("pattern", file, "Pattern JSON file")->required();
    playc->add_option("--device", device, "virtual or serial:<path>")->capture_default_str();

    auto* decode = app.add_subcommand("decode", "Decode wire frames from hex");
    decode->add_option("hex", hex, "Hex bytes, whitespace allowed")->required();

    auto* serve = app.add_subcommand("serve", "Run the HTTP/WebSocket service");
    auto* port_opt = serve->add_option("--port", port, "Listen port")->check(CLI::Range(0, 65535));
    serve->add_option("--library", library, "Pattern library directory");
    serve->add_option("--config", config_file, "Service config JSON file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*compile) return cmd_compile(file, out);
        if (*simulate) return cmd_simulate(file, plant, csv);
        if (*playc) return cmd_play(file, device, plant);
        if (*decode) return cmd_decode(hex);
        if (*serve) {
            return cmd_serve(config_file, port_opt->count() ? std::optional(port) : std::nullopt,
                             library);
        }
    } catch (const Exit& e) {
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "moheat: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}
