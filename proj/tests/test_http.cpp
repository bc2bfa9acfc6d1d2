#include "moheat/device.hpp"
#include "moheat/http_server.hpp"

#include "http_client.hpp"
#include "temp_dir.hpp"

#include <doctest.h>

#include <fcntl.h>
#include <poll.h>
#include <unistd.h>

#include <atomic>
#include <thread>

using namespace moheat;
using json = nlohmann::json;
using testing::http_request;
using testing::ws_collect;

namespace {

struct Rig {
    testing::TempDir dir;
    std::unique_ptr<Service> service;
    std::unique_ptr<HttpServer> server;

    explicit Rig(std::vector<std::string> allowlist = {}) {
        ServiceConfig c;
        c.library_dir = dir.path();
        c.seed_demos = false;
        c.serial_allowlist = std::move(allowlist);
        service = std::make_unique<Service>(c);
        server = std::make_unique<HttpServer>(*service, "127.0.0.1", 0);
        server->start();
    }
    ~Rig() {
        server->stop();
        service->shutdown();
    }
    std::uint16_t port() const { return server->port(); }
};

const std::string kChill = R"({"type":"cold","intensity":1.0,"duration_ms":2000,"delay_ms":0})";

}  // namespace

TEST_CASE("basic HTTP round trips") {
    Rig rig;
    const auto health = http_request(rig.port(), "GET", "/healthz");
    CHECK(health.status == 200);
    CHECK(health.body == R"({"status":"ok"})");

    const auto put = http_request(rig.port(), "PUT", "/patterns/chill", kChill);
    CHECK(put.status == 200);
    const auto get = http_request(rig.port(), "GET", "/patterns/chill");
    CHECK(get.body == put.body);
    CHECK(http_request(rig.port(), "PUT", "/patterns/chill", get.body).body == get.body);

    const auto missing = http_request(rig.port(), "GET", "/patterns/missing");
    CHECK(missing.status == 404);
    CHECK(json::parse(missing.body)["error"] == "not_found");
    CHECK(http_request(rig.port(), "DELETE", "/patterns/chill").status == 204);
    CHECK(http_request(rig.port(), "GET", "/patterns").body == "[]");
}

TEST_CASE("oversized bodies are refused") {
    Rig rig;
    const auto r = http_request(rig.port(), "PUT", "/patterns/big", std::string(2 << 20, ' '));
    CHECK(r.status == 413);
}

TEST_CASE("virtual session telemetry over WebSocket: 1000 ms at dt 10 gives 102 messages") {
    Rig rig;
    const auto created = http_request(
        rig.port(), "POST", "/sessions",
        R"({"pattern":{"type":"hot","intensity":1.0,"duration_ms":1000,"delay_ms":0},"device":"virtual"})");
    REQUIRE(created.status == 201);
    const auto id = json::parse(created.body)["session_id"].get<std::string>();

    testing::WsResult results[2];
    {
        std::jthread a([&] { results[0] = ws_collect(rig.port(), "/sessions/" + id + "/telemetry"); });
        std::jthread b([&] { results[1] = ws_collect(rig.port(), "/sessions/" + id + "/telemetry"); });
    }
    for (const auto& r : results) {
        CHECK(r.handshake_status == 101);
        CHECK(r.closed_normally);
        CHECK(r.messages.size() == 102);
    }
    CHECK(results[0].messages == results[1].messages);
    const auto last = json::parse(results[0].messages.back());
    CHECK(last["state"] == "done");
    CHECK(json::parse(results[0].messages[100])["t_ms"] == 1000);

    const auto status = json::parse(http_request(rig.port(), "GET", "/sessions/" + id).body);
    CHECK(status["status"]["state"] == "done");
    CHECK(status["status"]["elapsed_ms"] == 1000);

    // Late subscriber to a finished session: one terminal message, then close.
    const auto late = ws_collect(rig.port(), "/sessions/" + id + "/telemetry");
    CHECK(late.messages == std::vector<std::string>{results[0].messages.back()});
}

TEST_CASE("telemetry for an unknown session is refused before the upgrade") {
    Rig rig;
    const auto r = ws_collect(rig.port(), "/sessions/nope/telemetry");
    CHECK(r.handshake_status == 404);
    CHECK(r.messages.empty());
    CHECK(ws_collect(rig.port(), "/patterns").handshake_status == 404);
}

TEST_CASE("create storm over HTTP") {
    Rig rig;
    http_request(rig.port(), "PUT", "/patterns/chill", kChill);
    std::atomic<int> created{0}, conflicts{0};
    {
        std::vector<std::jthread> clients;
        for (int i = 0; i < 100; ++i) {
            clients.emplace_back([&] {
                const auto r = http_request(rig.port(), "POST", "/sessions", R"({"pattern":"chill"})");
                if (r.status == 201) ++created;
                if (r.status == 409) ++conflicts;
            });
        }
    }
    CHECK(created == 1);
    CHECK(conflicts == 99);
}

TEST_CASE("serial session streams link health") {
    const int master = posix_openpt(O_RDWR | O_NOCTTY);
    REQUIRE(master >= 0);
    REQUIRE(grantpt(master) == 0);
    REQUIRE(unlockpt(master) == 0);
    const std::string slave = ptsname(master);

    Rig rig({slave, "/dev/moheat-missing"});
    const auto devices = json::parse(http_request(rig.port(), "GET", "/devices").body);
    REQUIRE(devices.size() == 3);
    CHECK(devices[1]["available"] == true);
    CHECK(devices[2]["available"] == false);
    CHECK(http_request(rig.port(), "POST", "/sessions",
                       R"({"pattern":)" + kChill + R"(,"device":"serial:/dev/moheat-missing"})")
              .status == 503);

    // A tiny firmware stand-in on the pty master: ack every frame.
    std::atomic<bool> quit{false};
    std::jthread firmware([&] {
        DeviceEmulator emu;
        std::uint8_t buf[64];
        while (!quit) {
            pollfd pfd{master, POLLIN, 0};
            if (::poll(&pfd, 1, 20) <= 0) continue;
            const auto n = ::read(master, buf, sizeof buf);
            if (n <= 0) continue;
            const auto reply = emu.feed(std::span(buf, static_cast<std::size_t>(n)));
            if (!reply.empty()) {
                [[maybe_unused]] auto w = ::write(master, reply.data(), reply.size());
            }
        }
    });

    const auto created = http_request(
        rig.port(), "POST", "/sessions",
        R"({"pattern":{"type":"hot","intensity":1.0,"duration_ms":300,"delay_ms":0},"device":"serial:)" +
            slave + "\"}");
    REQUIRE(created.status == 201);
    const auto id = json::parse(created.body)["session_id"].get<std::string>();
    const auto r = ws_collect(rig.port(), "/sessions/" + id + "/telemetry");
    REQUIRE(r.messages.size() >= 2);
    for (const auto& m : r.messages) {
        const auto j = json::parse(m);
        CHECK_FALSE(j.contains("temp_c"));
        CHECK(j.contains("link_health"));
    }
    const auto last = json::parse(r.messages.back());
    CHECK(last["state"] == "done");
    CHECK(last["link_health"]["acks"] == 2);
    quit = true;
    firmware.join();
    ::close(master);
}
