#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptxlink/aggregation/aggregation.hpp"
#include "ptxlink/jumphost/jumphost.hpp"
#include "ptxlink/metrics/metrics.hpp"
#include "ptxlink/netemu/config.hpp"
#include "ptxlink/netemu/topology.hpp"
#include "ptxlink/protocol/arq.hpp"
#include "ptxlink/protocol/session.hpp"
#include "ptxlink/robot/robot.hpp"

namespace ptxlink::scenario {

using netemu::Micros;

/// Links of a topology instantiated inside one engine: one Link per hop and
/// direction, each with its own random stream.
class Network {
public:
    Network(const netemu::Topology& topo, std::uint64_t seed, double delay_scale = 1.0);
    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    /// Directed path along the minimum-delay route; throws ConfigError when
    /// the endpoints are not connected.
    netemu::LinkPath path(std::string_view from, std::string_view to, const std::set<netemu::Medium>& avoid = {},
                          Micros forwarding_us = 0);
    /// Every directed Link whose medium matches, for outage injection.
    std::vector<netemu::Link*> links_with(netemu::Medium m);
    /// Both directions of every link joining the shore zone to the rest.
    std::vector<netemu::Link*> shore_links();
    const netemu::Topology& topology() const noexcept { return topo_; }

private:
    netemu::Link& directed(const netemu::TopologyLink& l, const std::string& from, const std::string& to);

    netemu::Topology topo_;
    std::uint64_t seed_;
    double scale_;
    std::map<std::string, netemu::Link> links_;
};

// --- teleoperation ----------------------------------------------------------

struct TeleopConfig {
    std::string scenario = "setup3";
    std::string local_network = "5g_sa";
    /// Media the control-room path must not use (the backup satellite by default).
    std::set<netemu::Medium> avoid{netemu::Medium::satellite};
    nlohmann::json profile_overrides = nlohmann::json::object();
    jumphost::OperatorRegistry registry;
    jumphost::JumpHostConfig jump_host;
    robot::RobotConfig robot;
    robot::World world;
    std::optional<robot::InspectionRoute> route;
    std::uint64_t seed = 42;
    protocol::ArqConfig arq{.window = 8};
};

/// Control room → jump host → robot command path with the reply path back,
/// all inside one scheduler. Shared by the simulated teleop scenario and the
/// real-time serve mode.
class TeleopEngine {
public:
    using ConsoleId = int;

    struct AuthResult {
        bool ok = false;
        protocol::SessionId session = 0;
        Micros expires_at_us = 0;
        protocol::OpMask allowed_ops = 0;
    };
    struct Reply {
        protocol::CommandReply reply;
        Micros sent_at = 0;
        Micros received_at = 0;
        double rtt_ms() const { return netemu::to_ms(received_at - sent_at); }
    };
    using AuthFn = std::function<void(const AuthResult&)>;
    using ReplyFn = std::function<void(const Reply&)>;

    explicit TeleopEngine(TeleopConfig config);
    TeleopEngine(const TeleopEngine&) = delete;
    TeleopEngine& operator=(const TeleopEngine&) = delete;

    netemu::Scheduler& scheduler() noexcept { return sched_; }

    /// Sends an AUTH request from a new operator console.
    ConsoleId open_console(const std::string& token, AuthFn on_auth);
    /// Seals and sends a command; nullopt when the console has no session.
    std::optional<std::uint32_t> send_command(ConsoleId console, const protocol::CommandMessage& cmd, ReplyFn on_reply);
    /// Last sealed payload a console sent (for replay experiments).
    const protocol::Bytes& last_payload(ConsoleId console) const;
    /// Raw COMMAND payload into the control-room uplink, bypassing any console.
    void inject_command_payload(protocol::Bytes payload);

    robot::RobotAgent& robot() noexcept { return *robot_; }
    const jumphost::JumpHost& jump_host() const noexcept { return jump_host_; }
    const std::vector<jumphost::RobotReceipt>& receipts() const noexcept { return receipts_; }
    const netemu::TraceLog& trace() const noexcept { return trace_; }
    /// Replies addressed to no known console (e.g. to injected commands).
    const std::vector<protocol::CommandReply>& unrouted() const noexcept { return unrouted_; }
    Network& network() noexcept { return *net_; }
    /// Commands still waiting for a reply, over all consoles.
    std::size_t unanswered() const;

private:
    struct Console {
        protocol::SessionClient client;
        AuthFn on_auth;
        std::map<std::uint32_t, std::pair<Micros, ReplyFn>> pending;
        protocol::Bytes last_payload;
    };

    void at_jump_host(const protocol::Frame& f);
    void at_robot(const protocol::Frame& f);
    void at_control_room(const protocol::Frame& f);
    void reply_to_control_room(const protocol::CommandReply& r);

    TeleopConfig config_;
    netemu::Scheduler sched_;
    std::unique_ptr<Network> net_;
    netemu::TraceLog trace_;
    jumphost::JumpHost jump_host_;
    std::unique_ptr<robot::RobotAgent> robot_;
    std::unique_ptr<protocol::ArqChannel> uplink_;     // control room -> jump host
    std::unique_ptr<protocol::ArqChannel> downlink_;   // jump host -> control room
    std::unique_ptr<protocol::ArqChannel> to_robot_;   // jump host -> robot
    std::unique_ptr<protocol::ArqChannel> from_robot_; // robot -> jump host
    std::map<ConsoleId, Console> consoles_;
    std::deque<ConsoleId> auth_waiting_;
    std::vector<jumphost::RobotReceipt> receipts_;
    std::vector<protocol::CommandReply> unrouted_;
    ConsoleId next_console_ = 1;
};

struct TeleopSpec {
    TeleopConfig engine;
    std::string token = "operator-token";
    std::size_t commands = 100;
    double rate_hz = 10.0;
    protocol::CommandMessage command{protocol::Gait::walk, 0.5, 0.0, 0.0, 100};
    /// Adds forged, tampered, replayed, unprivileged and expired-session commands.
    bool adversarial = true;

    static TeleopSpec defaults();
};

struct TeleopResult {
    std::vector<double> rtt_ms;
    std::size_t accepted = 0;
    std::size_t rejected_by_robot = 0;
    std::size_t unanswered = 0;
    std::map<std::string, std::size_t> rejected_by_host;
    std::vector<jumphost::RobotReceipt> receipts;
    std::vector<jumphost::AuditEntry> audit;
    jumphost::BypassReport bypass;
    jumphost::AuditVerdict audit_verdict;
    robot::RobotState final_state;
    netemu::TraceLog trace;
};

TeleopResult run_teleop(const TeleopSpec& spec);
nlohmann::json report_json(const TeleopResult& r);

// --- inspection round -------------------------------------------------------

struct InspectionSpec {
    std::string scenario = "setup1";
    std::string local_network = "5g_sa";
    nlohmann::json profile_overrides = nlohmann::json::object();
    robot::InspectionRoute route;
    robot::World world;
    std::vector<aggregation::AnomalyRule> rules;
    robot::RobotConfig robot;
    aggregation::ForwarderConfig forwarder;
    std::uint64_t seed = 42;
    /// Outage on every shore-facing link during [from, to).
    std::optional<std::pair<Micros, Micros>> shore_outage;
};

struct InspectionResult {
    std::vector<robot::RouteEvent> events;
    std::optional<std::string> aborted;
    std::size_t generated = 0;
    std::size_t ingested = 0;
    std::vector<aggregation::Alarm> alarms;
    std::size_t twin_received = 0;
    std::size_t forward_retries = 0;
    metrics::BoxStats ingest_latency_ms;
    metrics::PacketAccounting accounting;
    netemu::TraceLog trace;
    Micros finished_at = 0;
};

InspectionResult run_inspection(const InspectionSpec& spec);
nlohmann::json report_json(const InspectionResult& r);

/// A small built-in inspection round used when no route file is given.
robot::InspectionRoute default_route();

}  // namespace ptxlink::scenario
