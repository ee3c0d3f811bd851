#include "classattn/server.hpp"

#include <atomic>
#include <deque>
#include <optional>
#include <thread>

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
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

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

std::string_view target_of(const Request& req) {
    const auto t = req.target();
    return {t.data(), t.size()};
}

struct Target {
    std::vector<std::string> segments;
    std::map<std::string, std::string> query;
};

Target parse_target(std::string_view target) {
    Target t;
    const auto q = target.find('?');
    std::string_view path = target.substr(0, q);
    if (q != std::string_view::npos) {
        std::string_view rest = target.substr(q + 1);
        while (!rest.empty()) {
            const auto amp = rest.find('&');
            const std::string_view kv = rest.substr(0, amp);
            const auto eq = kv.find('=');
            if (eq == std::string_view::npos) {
                t.query.emplace(std::string(kv), "");
            } else {
                t.query.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
            }
            if (amp == std::string_view::npos) break;
            rest = rest.substr(amp + 1);
        }
    }
    while (!path.empty()) {
        const auto slash = path.find('/');
        if (slash != 0) t.segments.emplace_back(path.substr(0, slash));
        if (slash == std::string_view::npos) break;
        path = path.substr(slash + 1);
    }
    return t;
}

http::status status_of(ErrorCode code) {
    switch (code) {
        case ErrorCode::Auth: return http::status::forbidden;
        case ErrorCode::NotFound: return http::status::not_found;
        case ErrorCode::SessionClosed: return http::status::conflict;
        default: return http::status::bad_request;
    }
}

// An HTTP-level failure carrying its status and JSON body.
struct HttpError {
    http::status status;
    json body;
};

HttpError http_error(const Error& e) {
    json body = error_json(e.code(), e.what());
    if (const auto* ce = dynamic_cast<const ConfigError*>(&e)) body["field"] = ce->field();
    return {status_of(e.code()), std::move(body)};
}

HttpError not_found(std::string_view what) {
    return {http::status::not_found, error_json(ErrorCode::NotFound, std::string("no route ") + std::string(what))};
}

std::string instructor_key(const Request& req, const Target& t) {
    if (const auto it = req.find("X-Instructor-Key"); it != req.end()) return std::string(it->value());
    if (const auto it = t.query.find("key"); it != t.query.end()) return it->second;
    return {};
}

}  // namespace

struct Server::Impl {
    Options options;
    SessionManager manager;
    net::io_context ioc{1};
    tcp::acceptor acceptor{ioc};
    net::steady_timer ticker{ioc};
    std::thread thread;
    std::atomic<bool> stopped{false};
    std::mutex stop_mu;

    explicit Impl(Options o) : options(std::move(o)), manager(options.manager) {}

    void listen();
    void accept();
    void schedule_tick();

    std::shared_ptr<Session> authorize(const Request& req, const Target& t, const std::string& id) {
        const std::string key = instructor_key(req, t);
        if (key.empty()) {
            manager.find(id);  // unknown sessions report 404 first
            throw HttpError{http::status::unauthorized, error_json(ErrorCode::Auth, "instructor key required")};
        }
        return manager.authorize(id, key);
    }

    Response handle(const Request& req);
    std::pair<http::status, json> route(const Request& req, const Target& t);
};

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
    enum class Role { Student, Instructor };

    WsSession(tcp::socket socket, std::shared_ptr<Session> session, Role role, std::size_t max_queue)
        : ws_(std::move(socket)), session_(std::move(session)), role_(role), max_queue_(max_queue) {}

    ~WsSession() {
        if (subscription_) session_->unsubscribe(*subscription_);
    }

    void run(Request req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.read_message_max(4 << 20);
        ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) return;
        if (role_ == Role::Instructor) {
            std::weak_ptr<WsSession> weak = shared_from_this();
            subscription_ = session_->subscribe([weak](const std::string& msg) {
                if (auto self = weak.lock()) {
                    net::post(self->ws_.get_executor(), [self, msg] { self->send(msg); });
                }
            });
        }
        read();
    }

    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

    void on_read(beast::error_code ec) {
        if (ec) return;
        std::string text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        send(reply(text).dump());
        read();
    }

    json reply(std::string_view text) {
        try {
            if (role_ == Role::Student) {
                const GazeMessage m = parse_gaze_message(text);
                const IngestResult r = session_->ingest(m.token, m.samples);
                return ack_json(r.accepted, r.dropped);
            }
            const json j = parse_object(text);
            const auto type = j.find("type");
            if (type == j.end() || *type != "set_threshold") {
                return error_json(ErrorCode::Parse, "expected {\"type\":\"set_threshold\",\"threshold\":x}");
            }
            const auto th = j.find("threshold");
            if (th == j.end() || !th->is_number()) {
                return error_json(ErrorCode::Validation, "threshold must be a number");
            }
            session_->set_threshold(th->get<double>());
            return threshold_ack_json(session_->threshold());
        } catch (const Error& e) {
            return error_json(e.code(), e.what());
        }
    }

    void send(std::string msg) {
        outbox_.push_back(std::move(msg));
        // Keep the frame being written; drop the oldest waiting one.
        if (outbox_.size() > max_queue_ && outbox_.size() > 2) outbox_.erase(outbox_.begin() + 1);
        if (!writing_) write();
    }

    void write() {
        writing_ = true;
        ws_.text(true);
        ws_.async_write(net::buffer(outbox_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            self->outbox_.pop_front();
            if (ec) {
                self->outbox_.clear();
                self->writing_ = false;
                return;
            }
            if (self->outbox_.empty()) {
                self->writing_ = false;
            } else {
                self->write();
            }
        });
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    std::shared_ptr<Session> session_;
    Role role_;
    std::size_t max_queue_;
    std::optional<std::uint64_t> subscription_;
    std::deque<std::string> outbox_;
    bool writing_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket socket, Server::Impl& server) : stream_(std::move(socket)), server_(server) {}

    void run() {
        net::dispatch(stream_.get_executor(), [self = shared_from_this()] { self->read(); });
    }

private:
    void read() {
        parser_.emplace();
        parser_->body_limit(4 << 20);
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, *parser_,
                         [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

    void on_read(beast::error_code ec) {
        if (ec == http::error::end_of_stream) {
            stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
            return;
        }
        if (ec) return;
        Request req = parser_->release();
        if (websocket::is_upgrade(req)) {
            upgrade(std::move(req));
            return;
        }
        respond(server_.handle(req));
    }

    void upgrade(Request req) {
        const Target t = parse_target(target_of(req));
        try {
            if (t.segments.size() != 3 || t.segments[0] != "sessions") throw not_found(target_of(req));
            std::shared_ptr<Session> session;
            WsSession::Role role;
            if (t.segments[2] == "student") {
                session = server_.manager.find(t.segments[1]);
                role = WsSession::Role::Student;
            } else if (t.segments[2] == "instructor") {
                session = server_.authorize(req, t, t.segments[1]);
                role = WsSession::Role::Instructor;
            } else {
                throw not_found(target_of(req));
            }
            if (session->state() == SessionState::Closed) throw Error(ErrorCode::SessionClosed, "session is closed");
            stream_.expires_never();
            std::make_shared<WsSession>(stream_.release_socket(), std::move(session), role,
                                        server_.options.max_outbound_queue)
                ->run(std::move(req));
        } catch (const HttpError& e) {
            respond(error_response(req, e));
        } catch (const Error& e) {
            respond(error_response(req, http_error(e)));
        }
    }

    static Response error_response(const Request& req, const HttpError& e) {
        Response res{e.status, req.version()};
        res.set(http::field::content_type, "application/json");
        res.keep_alive(false);
        res.body() = e.body.dump();
        res.prepare_payload();
        return res;
    }

    void respond(Response res) {
        auto sp = std::make_shared<Response>(std::move(res));
        http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code ec, std::size_t) {
            if (ec) return;
            if (sp->need_eof()) {
                self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
                return;
            }
            self->read();
        });
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    std::optional<http::request_parser<http::string_body>> parser_;
    Server::Impl& server_;
};

json parse_body(const Request& req) {
    if (req.body().empty()) return json::object();
    json j = json::parse(req.body(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::Parse, "request body must be a JSON object");
    return j;
}

}  // namespace

std::pair<http::status, json> Server::Impl::route(const Request& req, const Target& t) {
    const auto& seg = t.segments;
    const auto method = req.method();
    const auto require = [&](http::verb v) {
        if (method != v) {
            throw HttpError{http::status::method_not_allowed,
                            error_json(ErrorCode::Validation, "method not allowed")};
        }
    };

    if (seg.size() == 1 && seg[0] == "healthz") {
        require(http::verb::get);
        return {http::status::ok, json{{"status", "ok"}, {"sessions", manager.sessions().size()}}};
    }
    if (seg.empty() || seg[0] != "sessions") throw not_found(target_of(req));

    if (seg.size() == 1) {
        require(http::verb::post);
        const SessionConfig cfg = session_config_from_json(parse_body(req), manager.defaults(), "session");
        const CreatedSession c = manager.create(cfg);
        spdlog::info("session {} created", c.session_id);
        return {http::status::created,
                json{{"session_id", c.session_id}, {"instructor_key", c.instructor_key}, {"config", to_json(cfg)}}};
    }
    if (seg.size() != 3) throw not_found(target_of(req));
    const std::string& id = seg[1];
    const std::string& action = seg[2];

    if (action == "join") {
        require(http::verb::post);
        const auto session = manager.find(id);
        return {http::status::ok, json{{"session", id}, {"token", session->join()}}};
    }
    if (action == "summary") {
        require(http::verb::get);
        return {http::status::ok, authorize(req, t, id)->summary()};
    }
    if (action == "close") {
        require(http::verb::post);
        const auto session = authorize(req, t, id);
        const json body = parse_body(req);
        std::optional<double> end;
        if (const auto it = body.find("end_ms"); it != body.end()) {
            if (!it->is_number()) throw ConfigError("end_ms", "must be a number");
            end = it->get<double>();
        }
        session->close(end, "instructor");
        spdlog::info("session {} closed by instructor", id);
        return {http::status::ok,
                json{{"type", "closed"}, {"session", id}, {"metrics", to_json(session->metrics())}}};
    }
    if (action == "threshold") {
        require(http::verb::post);
        const auto session = authorize(req, t, id);
        const json body = parse_body(req);
        const auto it = body.find("threshold");
        if (it == body.end() || !it->is_number()) throw ConfigError("threshold", "must be a number");
        session->set_threshold(it->get<double>());
        return {http::status::ok, threshold_ack_json(session->threshold())};
    }
    throw not_found(target_of(req));
}

Response Server::Impl::handle(const Request& req) {
    Response res{http::status::ok, req.version()};
    res.set(http::field::server, "classattn");
    res.set(http::field::access_control_allow_origin, "*");
    res.set(http::field::access_control_allow_headers, "Content-Type, X-Instructor-Key");
    res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res.keep_alive(req.keep_alive());
    if (req.method() == http::verb::options) {
        res.result(http::status::no_content);
        res.prepare_payload();
        return res;
    }
    json body;
    try {
        auto [status, out] = route(req, parse_target(target_of(req)));
        res.result(status);
        body = std::move(out);
    } catch (const HttpError& e) {
        res.result(e.status);
        body = e.body;
    } catch (const Error& e) {
        const HttpError he = http_error(e);
        res.result(he.status);
        body = he.body;
    } catch (const std::exception& e) {
        spdlog::error("request {} failed: {}", std::string(target_of(req)), e.what());
        res.result(http::status::internal_server_error);
        body = error_json(ErrorCode::Validation, "internal error");
    }
    res.set(http::field::content_type, "application/json");
    res.body() = body.dump();
    res.prepare_payload();
    return res;
}

void Server::Impl::listen() {
    beast::error_code ec;
    const auto address = net::ip::make_address(options.host, ec);
    if (ec) throw ConfigError("host", "invalid address '" + options.host + "'");
    const tcp::endpoint ep{address, options.port};
    acceptor.open(ep.protocol(), ec);
    if (!ec) acceptor.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor.bind(ep, ec);
    if (!ec) acceptor.listen(net::socket_base::max_listen_connections, ec);
    if (ec) {
        throw Error(ErrorCode::Validation,
                    "cannot listen on " + options.host + ":" + std::to_string(options.port) + ": " + ec.message());
    }
}

void Server::Impl::accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
        if (ec) {
            if (ec == net::error::operation_aborted || !acceptor.is_open()) return;
            spdlog::warn("accept failed: {}", ec.message());
        } else {
            std::make_shared<HttpSession>(std::move(socket), *this)->run();
        }
        accept();
    });
}

void Server::Impl::schedule_tick() {
    ticker.expires_after(options.tick_interval);
    ticker.async_wait([this](beast::error_code ec) {
        if (ec) return;
        try {
            manager.tick_all();
        } catch (const std::exception& e) {
            spdlog::error("tick failed: {}", e.what());
        }
        schedule_tick();
    });
}

Server::Server(Options options) : impl_(std::make_unique<Impl>(std::move(options))) {
    impl_->listen();
    impl_->accept();
    impl_->schedule_tick();
}

Server::~Server() {
    stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::uint16_t Server::port() const noexcept {
    beast::error_code ec;
    const auto ep = impl_->acceptor.local_endpoint(ec);
    return ec ? 0 : ep.port();
}

SessionManager& Server::manager() noexcept { return impl_->manager; }

void Server::run() { impl_->ioc.run(); }

void Server::start() {
    impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

void Server::stop(const std::string& reason) {
    std::lock_guard lock(impl_->stop_mu);
    if (impl_->stopped.exchange(true)) return;
    impl_->manager.close_all(reason);
    net::post(impl_->ioc, [impl = impl_.get()] {
        beast::error_code ec;
        impl->acceptor.close(ec);
        impl->ticker.cancel();
        // Let pending close notifications go out before stopping.
        auto grace = std::make_shared<net::steady_timer>(impl->ioc, std::chrono::milliseconds(50));
        grace->async_wait([impl, grace](beast::error_code) { impl->ioc.stop(); });
    });
    if (impl_->thread.joinable() && impl_->thread.get_id() != std::this_thread::get_id()) impl_->thread.join();
}

}  // namespace classattn
