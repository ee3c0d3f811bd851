/**
 * remote.hpp — clients of the server protocol (server.hpp) and the
 * networked scenario driver.
 *
 * run_remote_scenario plays a scenario against a running server as one
 * WebSocket client per student plus one instructor subscriber:
 *
 *   1. POST /sessions with the script's session config
 *   2. instructor socket subscribes
 *   3. each student joins over HTTP, opens its socket and sends its batches
 *      at send_ms / speedup of wall time, waiting for each ack
 *   4. POST /sessions/{id}/close with end_ms = script length
 *   5. the instructor socket collects window events until "closed"
 *
 * With server timestamps the server clock must run at the same speedup
 * (serve --time-scale). Client timestamps work at any speed.
 *
 * The session record is written by the server (its record directory).
 */

#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "classattn/simulator.hpp"

namespace classattn {

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 8080;

    // Accepts "host:port", "http://host:port" or "ws://host:port".
    static Endpoint parse(const std::string& text);
    std::string str() const;
};

struct HttpReply {
    int status = 0;
    nlohmann::json body;
};

// One request on a fresh connection. Throws Error(NotFound) when the server
// is unreachable; HTTP error statuses are returned, not thrown.
HttpReply http_request(const Endpoint& ep, const std::string& method, const std::string& target,
                       const std::optional<nlohmann::json>& body = std::nullopt,
                       const std::map<std::string, std::string>& headers = {});

class WsClient {
public:
    // Throws Error(NotFound) on connection failure and Error(Auth) when the
    // upgrade is refused.
    WsClient(const Endpoint& ep, const std::string& target,
             std::chrono::milliseconds timeout = std::chrono::seconds(10));
    ~WsClient();

    WsClient(const WsClient&) = delete;
    WsClient& operator=(const WsClient&) = delete;

    void send(const std::string& text);
    // Next text frame, or nullopt on timeout or when the connection closed.
    std::optional<std::string> read(std::chrono::milliseconds timeout);
    void close();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct RemoteOptions {
    double speedup = 10.0;
    SessionConfig base_config;
    // How long the instructor socket waits for each event before giving up.
    std::chrono::milliseconds event_timeout{30000};
};

// Throws Error(NotFound) when the server is unreachable and
// Error(Validation) when more than half of the students fail.
ScenarioSummary run_remote_scenario(const ScenarioScript& script, const Endpoint& ep,
                                    const RemoteOptions& options = {});

}  // namespace classattn
