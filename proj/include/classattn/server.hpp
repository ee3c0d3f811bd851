/**
 * server.hpp — HTTP and WebSocket front end of the session manager.
 *
 * HTTP (JSON bodies, CORS open for browser dashboards):
 *
 *   POST /sessions                  body: optional session config (config.hpp keys)
 *                                   201 {"session_id","instructor_key","config"}
 *   POST /sessions/{id}/join        200 {"session","token"}
 *   GET  /sessions/{id}/summary     instructor key; 200 Session::summary()
 *   POST /sessions/{id}/close       instructor key; body: optional {"end_ms":t}
 *                                   200 {"type":"closed",...}
 *   POST /sessions/{id}/threshold   instructor key; body {"threshold":x}
 *                                   200 {"type":"threshold_ack","threshold":x}
 *   GET  /healthz                   200 {"status":"ok","sessions":n}
 *
 * The instructor key travels in the X-Instructor-Key header or the `key`
 * query parameter. Errors are {"type":"error","code":..,"message":..} with
 * status 400 (validation, parse; plus "field" for config errors), 401 (no
 * key), 403 (wrong key), 404 (unknown session or route), 409 (closed).
 *
 * WebSocket (text frames, see wire.hpp):
 *
 *   /sessions/{id}/student                  gaze -> ack | error
 *   /sessions/{id}/instructor?key=K         window, closed, threshold_ack, error;
 *                                           accepts set_threshold
 *
 * Upgrades for unknown sessions or bad keys are refused with the HTTP status
 * above. A ticker closes due windows of every session every tick interval.
 */

#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>

#include "classattn/session.hpp"

namespace classattn {

class Server {
public:
    struct Options {
        std::string host = "127.0.0.1";
        std::uint16_t port = 0;  // 0 picks a free port
        SessionManager::Options manager;
        std::chrono::milliseconds tick_interval{100};
        // Messages waiting for a slow instructor socket beyond this are dropped,
        // oldest first.
        std::size_t max_outbound_queue = 256;
    };

    // Binds and listens; throws Error(Validation) when the address is unusable
    // (for example, port in use).
    explicit Server(Options options);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    std::uint16_t port() const noexcept;
    SessionManager& manager() noexcept;

    // Serves on the calling thread until stop().
    void run();
    // Serves on an internal thread; stop() joins it.
    void start();
    // Closes every session (writing their close records), then stops serving.
    // Safe to call from any thread, more than once.
    void stop(const std::string& reason = "shutdown");

    struct Impl;  // implementation detail

private:
    std::unique_ptr<Impl> impl_;
};

}  // namespace classattn
