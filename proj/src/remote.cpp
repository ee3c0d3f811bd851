#include "classattn/remote.hpp"

#include <atomic>
#include <mutex>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "classattn/error.hpp"
#include "classattn/wire.hpp"

namespace classattn {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;
using namespace std::chrono_literals;

Endpoint Endpoint::parse(const std::string& text) {
    std::string s = text;
    for (const char* scheme : {"http://", "ws://"}) {
        if (s.rfind(scheme, 0) == 0) s = s.substr(std::char_traits<char>::length(scheme));
    }
    if (const auto slash = s.find('/'); slash != std::string::npos) s = s.substr(0, slash);
    Endpoint ep;
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) {
        if (!s.empty()) ep.host = s;
        return ep;
    }
    ep.host = s.substr(0, colon);
    try {
        const int port = std::stoi(s.substr(colon + 1));
        if (port < 1 || port > 65535) throw std::out_of_range("port");
        ep.port = static_cast<std::uint16_t>(port);
    } catch (const std::exception&) {
        throw ConfigError("endpoint", "invalid port in '" + text + "'");
    }
    return ep;
}

std::string Endpoint::str() const { return host + ":" + std::to_string(port); }

namespace {

// Runs ioc until done is set or the timeout passes; cancels the stream's
// pending operations on timeout. Returns false on timeout.
template <typename Stream>
bool run_until(net::io_context& ioc, Stream& lowest, const bool& done, std::chrono::milliseconds timeout) {
    ioc.restart();
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (!done && std::chrono::steady_clock::now() < deadline) {
        if (ioc.run_one_until(deadline) == 0 && ioc.stopped()) break;
    }
    if (done) return true;
    lowest.cancel();
    ioc.restart();
    ioc.run();
    return false;
}

tcp::resolver::results_type resolve(net::io_context& ioc, const Endpoint& ep) {
    tcp::resolver resolver(ioc);
    beast::error_code ec;
    auto results = resolver.resolve(ep.host, std::to_string(ep.port), ec);
    if (ec) throw Error(ErrorCode::NotFound, "cannot resolve " + ep.str() + ": " + ec.message());
    return results;
}

void connect(net::io_context& ioc, beast::tcp_stream& stream, const Endpoint& ep, std::chrono::milliseconds timeout) {
    const auto results = resolve(ioc, ep);
    bool done = false;
    beast::error_code err;
    stream.async_connect(results, [&](beast::error_code ec, const tcp::endpoint&) {
        err = ec;
        done = true;
    });
    if (!run_until(ioc, stream, done, timeout) || err) {
        throw Error(ErrorCode::NotFound, "cannot connect to " + ep.str() + (err ? ": " + err.message() : ""));
    }
}

}  // namespace

HttpReply http_request(const Endpoint& ep, const std::string& method, const std::string& target,
                       const std::optional<json>& body, const std::map<std::string, std::string>& headers) {
    net::io_context ioc;
    beast::tcp_stream stream(ioc);
    connect(ioc, stream, ep, 10s);

    http::request<http::string_body> req{http::string_to_verb(method), target, 11};
    if (req.method() == http::verb::unknown) throw Error(ErrorCode::Validation, "unknown method " + method);
    req.set(http::field::host, ep.host);
    req.set(http::field::user_agent, "classattn");
    for (const auto& [k, v] : headers) req.set(k, v);
    if (body) {
        req.set(http::field::content_type, "application/json");
        req.body() = body->dump();
    }
    req.prepare_payload();

    beast::flat_buffer buffer;
    http::response<http::string_body> res;
    bool done = false;
    beast::error_code err;
    http::async_write(stream, req, [&](beast::error_code ec, std::size_t) {
        if (ec) {
            err = ec;
            done = true;
            return;
        }
        http::async_read(stream, buffer, res, [&](beast::error_code ec2, std::size_t) {
            err = ec2;
            done = true;
        });
    });
    if (!run_until(ioc, stream, done, 30s) || err) {
        throw Error(ErrorCode::NotFound, method + " " + target + " failed" + (err ? ": " + err.message() : ""));
    }
    beast::error_code ignored;
    stream.socket().shutdown(tcp::socket::shutdown_both, ignored);

    HttpReply reply;
    reply.status = static_cast<int>(res.result_int());
    reply.body = json::parse(res.body(), nullptr, false);
    if (reply.body.is_discarded()) reply.body = res.body();
    return reply;
}

struct WsClient::Impl {
    net::io_context ioc;
    websocket::stream<beast::tcp_stream> ws{ioc};
    beast::flat_buffer buffer;
    bool open = false;
};

WsClient::WsClient(const Endpoint& ep, const std::string& target, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>()) {
    auto& lowest = beast::get_lowest_layer(impl_->ws);
    connect(impl_->ioc, lowest, ep, timeout);
    websocket::response_type res;
    bool done = false;
    beast::error_code err;
    impl_->ws.async_handshake(res, ep.host, target, [&](beast::error_code ec) {
        err = ec;
        done = true;
    });
    if (!run_until(impl_->ioc, lowest, done, timeout)) throw Error(ErrorCode::NotFound, "handshake timed out");
    if (err) {
        switch (res.result()) {
            case http::status::unauthorized:
            case http::status::forbidden: throw Error(ErrorCode::Auth, "upgrade refused: " + res.body());
            case http::status::not_found: throw Error(ErrorCode::NotFound, "upgrade refused: " + res.body());
            case http::status::conflict: throw Error(ErrorCode::SessionClosed, "upgrade refused: " + res.body());
            default: throw Error(ErrorCode::NotFound, "handshake failed: " + err.message());
        }
    }
    impl_->open = true;
}

WsClient::~WsClient() { close(); }

void WsClient::send(const std::string& text) {
    if (!impl_->open) throw Error(ErrorCode::NotFound, "socket is closed");
    impl_->ws.text(true);
    beast::error_code ec;
    impl_->ws.write(net::buffer(text), ec);
    if (ec) {
        impl_->open = false;
        throw Error(ErrorCode::NotFound, "send failed: " + ec.message());
    }
}

std::optional<std::string> WsClient::read(std::chrono::milliseconds timeout) {
    if (!impl_->open) return std::nullopt;
    bool done = false;
    beast::error_code err;
    impl_->ws.async_read(impl_->buffer, [&](beast::error_code ec, std::size_t) {
        err = ec;
        done = true;
    });
    if (!run_until(impl_->ioc, beast::get_lowest_layer(impl_->ws), done, timeout) || err) {
        // A cancelled read leaves the stream unusable.
        impl_->open = false;
        return std::nullopt;
    }
    std::string out = beast::buffers_to_string(impl_->buffer.data());
    impl_->buffer.consume(impl_->buffer.size());
    return out;
}

void WsClient::close() {
    if (!impl_->open) return;
    impl_->open = false;
    bool done = false;
    impl_->ws.async_close(websocket::close_code::normal, [&](beast::error_code) { done = true; });
    run_until(impl_->ioc, beast::get_lowest_layer(impl_->ws), done, 2s);
}

namespace {

SessionMetrics metrics_from_json(const json& j) {
    SessionMetrics m;
    m.windows_published = j.value("windows_published", std::uint64_t{0});
    m.skipped_windows = j.value("skipped_windows", std::uint64_t{0});
    m.alerts = j.value("alerts", std::uint64_t{0});
    m.accepted = j.value("accepted", std::uint64_t{0});
    m.dropped = j.value("dropped", std::uint64_t{0});
    m.dropped_late = j.value("dropped_late", std::uint64_t{0});
    m.batches = j.value("batches", std::uint64_t{0});
    m.scoring_errors = j.value("scoring_errors", std::uint64_t{0});
    m.latency_p50_ms = j.value("latency_p50_ms", 0.0);
    m.latency_p99_ms = j.value("latency_p99_ms", 0.0);
    m.latency_max_ms = j.value("latency_max_ms", 0.0);
    return m;
}

void expect_status(const HttpReply& r, int status, const std::string& what) {
    if (r.status == status) return;
    const std::string msg = r.body.is_object() ? r.body.value("message", r.body.dump()) : r.body.dump();
    throw Error(r.status == 404 ? ErrorCode::NotFound : ErrorCode::Validation,
                what + " returned " + std::to_string(r.status) + ": " + msg);
}

}  // namespace

ScenarioSummary run_remote_scenario(const ScenarioScript& script, const Endpoint& ep, const RemoteOptions& options) {
    const auto wall_start = std::chrono::steady_clock::now();
    const GeneratedStream stream = generate_stream(script);
    const SessionConfig cfg = script.session_config(options.base_config);

    const HttpReply created = http_request(ep, "POST", "/sessions", to_json(cfg));
    expect_status(created, 201, "POST /sessions");
    const std::string id = created.body.at("session_id").get<std::string>();
    const std::string key = created.body.at("instructor_key").get<std::string>();
    const std::string base = "/sessions/" + id;
    spdlog::info("scenario '{}' on session {} with {} students", script.name, id, stream.students.size());

    // Instructor subscriber.
    std::vector<WindowEvent> events;
    std::atomic<bool> instructor_ok{false};
    WsClient instructor(ep, base + "/instructor?key=" + key);
    std::thread collector([&] {
        while (auto msg = instructor.read(options.event_timeout)) {
            const json j = json::parse(*msg, nullptr, false);
            if (j.is_discarded() || !j.is_object()) continue;
            const std::string type = j.value("type", "");
            if (type == "window") {
                events.push_back(window_event_from_json(j));
            } else if (type == "closed") {
                instructor_ok = true;
                return;
            }
        }
    });

    const std::size_t n = stream.students.size();
    std::vector<std::unique_ptr<WsClient>> sockets(n);
    std::vector<std::string> tokens(n);
    std::vector<std::string> failures(n);
    for (std::size_t i = 0; i < n; ++i) {
        try {
            const HttpReply joined = http_request(ep, "POST", base + "/join");
            expect_status(joined, 200, "join");
            tokens[i] = joined.body.at("token").get<std::string>();
            sockets[i] = std::make_unique<WsClient>(ep, base + "/student");
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    }
    const auto failed_count = [&] {
        return static_cast<std::size_t>(std::count_if(failures.begin(), failures.end(),
                                                       [](const std::string& f) { return !f.empty(); }));
    };
    const auto abort_if_majority_failed = [&](const char* phase) {
        if (2 * failed_count() > n) {
            for (std::size_t i = 0; i < n; ++i) {
                if (!failures[i].empty()) spdlog::error("student {}: {}", i, failures[i]);
            }
            throw Error(ErrorCode::Validation, std::string("scenario aborted during ") + phase + ": " +
                                                   std::to_string(failed_count()) + " of " + std::to_string(n) +
                                                   " students failed");
        }
    };
    const auto stop_collector = [&] {
        instructor.close();
        if (collector.joinable()) collector.join();
    };
    try {
        abort_if_majority_failed("connect");
    } catch (...) {
        http_request(ep, "POST", base + "/close", json::object(), {{"X-Instructor-Key", key}});
        stop_collector();
        throw;
    }

    const auto start = std::chrono::steady_clock::now();
    const auto at = [&](double t_ms) {
        return start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                           std::chrono::duration<double, std::milli>(t_ms / options.speedup));
    };
    std::vector<std::thread> students;
    for (std::size_t i = 0; i < n; ++i) {
        if (!sockets[i]) continue;
        students.emplace_back([&, i] {
            const StudentStream& st = stream.students[i];
            try {
                for (const auto& b : st.batches) {
                    std::this_thread::sleep_until(at(static_cast<double>(b.send_ms)));
                    GazeMessage m{tokens[i], st.batch_samples(b)};
                    sockets[i]->send(to_json(m).dump());
                    const auto reply = sockets[i]->read(10s);
                    if (!reply) throw Error(ErrorCode::NotFound, "no ack");
                    const json j = json::parse(*reply, nullptr, false);
                    if (j.is_discarded() || j.value("type", "") != "ack") {
                        throw Error(ErrorCode::Validation, "unexpected reply " + *reply);
                    }
                }
            } catch (const std::exception& e) {
                failures[i] = e.what();
            }
            sockets[i]->close();
        });
    }
    for (auto& t : students) t.join();
    std::this_thread::sleep_until(at(static_cast<double>(script.total_ms())));

    const HttpReply closed = http_request(ep, "POST", base + "/close",
                                          json{{"end_ms", script.total_ms()}}, {{"X-Instructor-Key", key}});
    if (closed.status != 200) spdlog::warn("close returned {}", closed.status);
    if (collector.joinable()) collector.join();
    instructor.close();

    const HttpReply summary = http_request(ep, "GET", base + "/summary", std::nullopt, {{"X-Instructor-Key", key}});
    expect_status(summary, 200, "summary");

    ScenarioSummary out;
    out.session = id;
    out.name = script.name;
    out.students = n;
    out.students_failed = failed_count();
    out.duration_ms = script.total_ms();
    out.windows = std::move(events);
    out.metrics = metrics_from_json(summary.body.at("metrics"));
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    if (!instructor_ok) spdlog::warn("instructor socket ended before the session closed");
    abort_if_majority_failed("streaming");
    return out;
}

}  // namespace classattn
