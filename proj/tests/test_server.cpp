#include <gtest/gtest.h>

#include <fstream>

#include "classattn/analyze.hpp"
#include "classattn/error.hpp"
#include "classattn/record.hpp"
#include "classattn/remote.hpp"
#include "classattn/server.hpp"

using namespace classattn;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

struct TestServer {
    std::filesystem::path records;
    std::unique_ptr<Server> server;
    Endpoint ep;

    explicit TestServer(double time_scale = 1.0, const std::string& name = "srv") {
        records = std::filesystem::temp_directory_path() / ("classattn_server_" + name);
        std::filesystem::remove_all(records);
        Server::Options o;
        o.manager.record_dir = records;
        o.manager.time_scale = time_scale;
        o.tick_interval = 20ms;
        server = std::make_unique<Server>(o);
        server->start();
        ep.port = server->port();
    }

    ~TestServer() {
        server.reset();
        std::filesystem::remove_all(records);
    }

    std::pair<std::string, std::string> create(const json& body = json::object()) {
        const auto r = http_request(ep, "POST", "/sessions", body);
        EXPECT_EQ(r.status, 201) << r.body.dump();
        return {r.body.at("session_id"), r.body.at("instructor_key")};
    }

    std::string join(const std::string& id) {
        const auto r = http_request(ep, "POST", "/sessions/" + id + "/join");
        EXPECT_EQ(r.status, 200);
        return r.body.at("token");
    }
};

std::string gaze(const std::string& token, const json& samples) {
    return json{{"type", "gaze"}, {"token", token}, {"samples", samples}}.dump();
}

// Reads frames until one of the given type arrives.
std::optional<json> read_type(WsClient& ws, const std::string& type, std::chrono::milliseconds timeout = 10s) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
        const auto msg = ws.read(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()));
        if (!msg) return std::nullopt;
        json j = json::parse(*msg);
        if (j.at("type") == type) return j;
    }
    return std::nullopt;
}

}  // namespace

TEST(Server, HealthzAndUnknownRoutes) {
    TestServer s;
    const auto h = http_request(s.ep, "GET", "/healthz");
    EXPECT_EQ(h.status, 200);
    EXPECT_EQ(h.body.at("status"), "ok");
    EXPECT_EQ(http_request(s.ep, "GET", "/nope").status, 404);
    EXPECT_EQ(http_request(s.ep, "POST", "/healthz").status, 405);
    EXPECT_EQ(http_request(s.ep, "OPTIONS", "/sessions").status, 204);
}

TEST(Server, CreateSessionDefaultsAndValidation) {
    TestServer s;
    const auto r = http_request(s.ep, "POST", "/sessions");
    ASSERT_EQ(r.status, 201);
    EXPECT_EQ(r.body.at("config").at("window_ms"), 10000);
    EXPECT_EQ(r.body.at("config").at("stride_ms"), 2000);
    EXPECT_EQ(r.body.at("config").at("min_samples"), 100);
    EXPECT_EQ(r.body.at("config").at("threshold"), 0.5);
    const auto r2 = http_request(s.ep, "POST", "/sessions");
    EXPECT_NE(r.body.at("session_id"), r2.body.at("session_id"));

    const auto bad = http_request(s.ep, "POST", "/sessions", json{{"window_ms", 1000}, {"stride_ms", 5000}});
    EXPECT_EQ(bad.status, 400);
    EXPECT_EQ(bad.body.at("field"), "session.stride_ms");
    EXPECT_EQ(http_request(s.ep, "POST", "/sessions", json{{"threshold", "high"}}).body.at("field"),
              "session.threshold");
}

TEST(Server, InstructorKeyGuardsSummary) {
    TestServer s;
    const auto [id, key] = s.create();
    s.join(id);
    EXPECT_EQ(http_request(s.ep, "GET", "/sessions/" + id + "/summary").status, 401);
    EXPECT_EQ(http_request(s.ep, "GET", "/sessions/" + id + "/summary?key=wrong").status, 403);
    EXPECT_EQ(http_request(s.ep, "GET", "/sessions/nope/summary?key=" + key).status, 404);
    EXPECT_EQ(http_request(s.ep, "POST", "/sessions/nope/join").status, 404);
    const auto ok = http_request(s.ep, "GET", "/sessions/" + id + "/summary", std::nullopt, {{"X-Instructor-Key", key}});
    ASSERT_EQ(ok.status, 200);
    EXPECT_EQ(ok.body.at("roster_size"), 1);
    EXPECT_EQ(http_request(s.ep, "GET", "/sessions/" + id + "/summary?key=" + key).status, 200);
}

TEST(Server, StudentSocketAcksAndRejects) {
    TestServer s;
    const auto [id, key] = s.create();
    const std::string token = s.join(id);
    WsClient student(s.ep, "/sessions/" + id + "/student");

    student.send(gaze(token, json::array({{0, 0.5, 0.5}, {1, 1.05, 0.5}, {2, 1.5, 0.5}, {3, "x", 0.2}})));
    const json ack = json::parse(*student.read(5s));
    EXPECT_EQ(ack.at("type"), "ack");
    EXPECT_EQ(ack.at("accepted"), 2);
    EXPECT_EQ(ack.at("dropped"), 2);

    student.send(gaze("forged-token", json::array({{0, 0.5, 0.5}})));
    EXPECT_EQ(json::parse(*student.read(5s)).at("code"), "auth");
    student.send("{not json");
    EXPECT_EQ(json::parse(*student.read(5s)).at("code"), "parse");
    // The connection survives bad frames.
    student.send(gaze(token, json::array({{0, 0.2, 0.2}})));
    EXPECT_EQ(json::parse(*student.read(5s)).at("accepted"), 1);

    EXPECT_THROW(WsClient(s.ep, "/sessions/nope/student"), Error);
}

TEST(Server, InstructorReceivesWindowsAndSetsThreshold) {
    // 20x clock: a 10 s window closes after 0.5 s of wall time.
    TestServer s(20.0, "instr");
    const auto [id, key] = s.create();
    const std::string token = s.join(id);
    try {
        WsClient bad(s.ep, "/sessions/" + id + "/instructor?key=wrong");
        FAIL() << "upgrade with a wrong key succeeded";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Auth);
    }
    WsClient instructor(s.ep, "/sessions/" + id + "/instructor?key=" + key);
    WsClient student(s.ep, "/sessions/" + id + "/student");
    json samples = json::array();
    for (int i = 0; i < 50; ++i) samples.push_back({i, 0.5, 0.5});
    student.send(gaze(token, samples));
    student.read(5s);

    const auto ev = read_type(instructor, "window");
    ASSERT_TRUE(ev.has_value());
    EXPECT_EQ(ev->at("start_ms"), 0);
    EXPECT_EQ(ev->at("end_ms"), 10000);
    EXPECT_EQ(ev->at("heatmap").at("rows"), 32);
    EXPECT_EQ(ev->dump().find(token), std::string::npos);

    instructor.send(R"({"type":"set_threshold","threshold":0.3})");
    const auto ack = read_type(instructor, "threshold_ack");
    ASSERT_TRUE(ack.has_value());
    EXPECT_EQ(ack->at("threshold"), 0.3);
    instructor.send(R"({"type":"set_threshold","threshold":1.2})");
    const auto err = read_type(instructor, "error");
    ASSERT_TRUE(err.has_value());
    EXPECT_EQ(err->at("code"), "validation");

    const auto http_ack = http_request(s.ep, "POST", "/sessions/" + id + "/threshold", json{{"threshold", 0.4}},
                                       {{"X-Instructor-Key", key}});
    EXPECT_EQ(http_ack.status, 200);
    EXPECT_EQ(http_ack.body.at("threshold"), 0.4);
    EXPECT_EQ(http_request(s.ep, "POST", "/sessions/" + id + "/threshold", json{{"threshold", 0}},
                           {{"X-Instructor-Key", key}})
                  .status,
              400);
}

TEST(Server, CloseNotifiesAndWritesRecord) {
    TestServer s(20.0, "close");
    const auto [id, key] = s.create();
    const std::string token = s.join(id);
    WsClient instructor(s.ep, "/sessions/" + id + "/instructor?key=" + key);
    const auto r = http_request(s.ep, "POST", "/sessions/" + id + "/close", json{{"end_ms", 20000}},
                                {{"X-Instructor-Key", key}});
    EXPECT_EQ(r.status, 200);
    const auto closed = read_type(instructor, "closed");
    ASSERT_TRUE(closed.has_value());
    EXPECT_EQ(closed->at("end_ms"), 20000);
    EXPECT_EQ(http_request(s.ep, "POST", "/sessions/" + id + "/join").status, 409);
    EXPECT_THROW(WsClient(s.ep, "/sessions/" + id + "/student"), Error);

    const Record rec = read_record(s.records / (id + ".ndjson"));
    ASSERT_TRUE(rec.close.has_value());
    EXPECT_EQ(rec.close->end_ms, 20000);
    EXPECT_EQ(rec.windows.size(), 6u);
    std::ifstream in(s.records / (id + ".ndjson"));
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_EQ(text.find(token), std::string::npos);
}

TEST(Server, StopClosesEverySession) {
    auto s = std::make_unique<TestServer>(1.0, "stop");
    const auto [a, ka] = s->create();
    const auto [b, kb] = s->create();
    const auto dir = s->records;
    s->server->stop("shutdown");
    for (const auto& id : {a, b}) {
        const Record rec = read_record(dir / (id + ".ndjson"));
        ASSERT_TRUE(rec.close.has_value()) << id;
        EXPECT_EQ(rec.close->reason, "shutdown");
    }
}

TEST(Server, PortInUseIsReported) {
    TestServer s;
    Server::Options o;
    o.port = s.ep.port;
    EXPECT_THROW(Server{o}, Error);
}

TEST(RemoteScenario, DrivesFullProtocol) {
    TestServer s(20.0, "remote");
    auto script = make_scenario(77, 6, StudentProfile{}, {{12000, SingleFocus{5}}, {8000, NoFocus{}}});
    script.session_overrides = json{{"timestamp_source", "client"}};
    RemoteOptions o;
    o.speedup = 20.0;
    const ScenarioSummary sum = run_remote_scenario(script, s.ep, o);
    EXPECT_EQ(sum.students_failed, 0u);
    ASSERT_EQ(sum.windows.size(), 6u);
    EXPECT_EQ(sum.windows.front().score.window_start, 0);
    EXPECT_EQ(sum.windows.back().score.window_end, 20000);
    EXPECT_EQ(sum.metrics.windows_published, 6u);
    EXPECT_GT(sum.metrics.accepted, 3000u);

    // The server's record replays to the same events.
    const Record rec = read_record(s.records / (sum.session + ".ndjson"));
    EXPECT_EQ(rec.windows.size(), 6u);
    EXPECT_TRUE(replay_record(rec).ok());
}

TEST(RemoteScenario, UnreachableServerFails) {
    Endpoint ep;
    ep.port = 1;
    EXPECT_THROW(run_remote_scenario(make_scenario(1, 2, StudentProfile{}, {{4000, SingleFocus{1}}}), ep), Error);
}

TEST(Endpoint, Parses) {
    EXPECT_EQ(Endpoint::parse("http://example:9000/x").host, "example");
    EXPECT_EQ(Endpoint::parse("ws://h:81").port, 81);
    EXPECT_EQ(Endpoint::parse("localhost").port, 8080);
    EXPECT_THROW(Endpoint::parse("h:99999"), ConfigError);
}
