#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptxlink/aggregation/aggregation.hpp"
#include "ptxlink/scenario/scenario.hpp"

namespace ptxlink::serve {

struct ServeConfig {
    std::string host = "127.0.0.1";
    /// 0 picks an ephemeral port.
    std::uint16_t port = 8765;
    scenario::TeleopConfig engine;
    std::vector<aggregation::AnomalyRule> rules;
    /// Written on stop: rtt_ms summary, audit export status.
    std::optional<std::string> report_path;
};

/// JSON schemas of the /ops messages, served under GET /schema.
nlohmann::json ops_schema();

/// Control-room gateway: ws://host:port/ops speaks JSON {auth, cmd,
/// telemetry, metric, alarm}; GET /schema publishes the message schemas.
///
/// Three actors: the socket listener (one I/O thread), the engine (a
/// TeleopEngine advanced in wall-clock time on its own thread) and the
/// per-connection writers. They exchange messages only: inbound text goes
/// through the engine inbox, outbound text is posted to the I/O thread.
class OpsServer {
public:
    explicit OpsServer(ServeConfig config);
    ~OpsServer();
    OpsServer(const OpsServer&) = delete;
    OpsServer& operator=(const OpsServer&) = delete;

    /// Binds and launches both threads; returns the bound port.
    std::uint16_t start();
    /// Stops both threads and writes the report (idempotent).
    void stop();
    /// Final report (valid after stop()).
    const nlohmann::json& report() const noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ptxlink::serve
