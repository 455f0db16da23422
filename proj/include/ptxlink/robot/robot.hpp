#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ptxlink/netemu/rng.hpp"
#include "ptxlink/netemu/scheduler.hpp"
#include "ptxlink/protocol/command.hpp"
#include "ptxlink/protocol/telemetry.hpp"

namespace ptxlink::robot {

using netemu::Micros;
using protocol::CommandMessage;
using protocol::Gait;
using protocol::TelemetryKind;
using protocol::TelemetryRecord;

struct RobotConfig {
    // Indexed by Gait.
    std::array<double, 4> speed_cap{0.0, 1.0, 1.5, 0.3};
    std::array<double, 4> step_cap{0.0, 0.05, 0.05, 0.12};
    std::array<double, 4> drain_coeff{0.1, 1.0, 1.6, 2.0};
    /// Seconds from full to empty at drain coefficient 1 (walk).
    double endurance_walk_s = 9'000.0;
    Micros tick_us = 50'000;
    protocol::PayloadModel image;
    /// Pose telemetry period while active; 0 disables it.
    Micros pose_period_us = 1'000'000;

    double speed_cap_for(Gait g) const { return speed_cap[static_cast<std::size_t>(g)]; }
    double step_cap_for(Gait g) const { return step_cap[static_cast<std::size_t>(g)]; }
    double drain_for(Gait g) const { return drain_coeff[static_cast<std::size_t>(g)]; }

    void validate() const;
    static RobotConfig from_json(const nlohmann::json& j);
};

enum class RobotMode { autonomous_route, teleop, halted };

std::string_view to_string(RobotMode m);

struct RobotState {
    Eigen::Vector2d position = Eigen::Vector2d::Zero();
    double heading = 0.0;
    Gait gait = Gait::idle;
    double speed = 0.0;
    double battery = 1.0;
    RobotMode mode = RobotMode::teleop;
};

class CommandRejected : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Linear battery model: drain per second is coeff(gait) / endurance.
/// Reaching zero halts the robot.
RobotState drain_battery(RobotState s, double dt_s, Gait gait, const RobotConfig& cfg = {});

/// One explicit Euler step with body-frame velocities (vx, vy) and yaw rate.
/// The planar speed is clamped to the gait cap.
RobotState euler_step(RobotState s, Gait gait, double vx, double vy, double yaw_rate, double dt_s,
                      const RobotConfig& cfg = {});

/// Holds `cmd` for its duration in fixed ticks. Throws CommandRejected when
/// the robot is halted or the battery is empty.
RobotState apply_command(const RobotState& s, const CommandMessage& cmd, const RobotConfig& cfg = {});

enum class ObstacleKind { step, clutter };

/// Axis-aligned box of constant height.
struct Obstacle {
    Eigen::Vector2d min = Eigen::Vector2d::Zero();
    Eigen::Vector2d max = Eigen::Vector2d::Zero();
    double height = 0.0;
    ObstacleKind kind = ObstacleKind::step;

    bool contains(const Eigen::Vector2d& p) const {
        return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() && p.y() <= max.y();
    }
};

enum class Traversal { traversable, blocked };

Traversal check_traversal(const Obstacle& obstacle, Gait gait, const RobotConfig& cfg = {});

/// Region where sensor stubs read elevated values.
struct Hotspot {
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    double radius = 1.0;
    std::optional<double> pipe_temp_c;
    std::optional<double> sound_level_db;
};

struct World {
    std::vector<Obstacle> obstacles;
    std::vector<Hotspot> hotspots;
    double ambient_pipe_temp_c = 45.0;
    double ambient_sound_db = 60.0;

    /// Accepts a bare obstacle list or `{obstacles, hotspots, ...}`.
    static World from_json(const nlohmann::json& j);
    static World load(const std::string& path);
};

enum class CaptureKind { image, thermal_stub, audio_stub };

std::string_view to_string(CaptureKind c);
CaptureKind capture_kind_from_string(std::string_view s);

struct Waypoint {
    Eigen::Vector2d position = Eigen::Vector2d::Zero();
    double dwell_s = 0.0;
    std::vector<CaptureKind> capture;
};

struct InspectionRoute {
    std::vector<Waypoint> waypoints;

    void validate() const;
    static InspectionRoute from_json(const nlohmann::json& j);
    static InspectionRoute load(const std::string& path);
};

/// Capture or status record. Non-image payloads are compact JSON of at most
/// 256 bytes.
TelemetryRecord generate_telemetry(const RobotState& s, TelemetryKind kind, netemu::Rng& rng, Micros now,
                                   const std::string& source = "robot", const RobotConfig& cfg = {},
                                   const World& world = {});

inline constexpr std::size_t kSmallRecordLimit = 256;

enum class RouteEventKind { waypoint_reached, capture_done, route_complete, blocked, route_aborted, preempted };

std::string_view to_string(RouteEventKind k);

struct RouteEvent {
    RouteEventKind kind;
    Micros at = 0;
    int waypoint = -1;
    std::string detail;

    bool operator==(const RouteEvent&) const = default;
};

class RouteAborted : public std::runtime_error {
public:
    RouteAborted(std::string reason, std::vector<RouteEvent> events);
    const std::string& reason() const noexcept { return reason_; }
    const std::vector<RouteEvent>& events() const noexcept { return events_; }

private:
    std::string reason_;
    std::vector<RouteEvent> events_;
};

/// Robot actor. All activity is driven by scheduler ticks on a fixed grid;
/// commands and route steps are serialized through those ticks.
class RobotAgent {
public:
    using TelemetrySink = std::function<void(TelemetryRecord)>;
    using EventSink = std::function<void(const RouteEvent&)>;

    struct CommandOutcome {
        bool accepted = false;
        std::string reason;
        Micros applied_at = 0;
        RobotState state;
    };
    using ReplyFn = std::function<void(const CommandOutcome&)>;

    RobotAgent(netemu::Scheduler& scheduler, RobotConfig config, World world, std::uint64_t seed,
               std::string id = "robot");
    RobotAgent(const RobotAgent&) = delete;
    RobotAgent& operator=(const RobotAgent&) = delete;

    void on_telemetry(TelemetrySink sink) { telemetry_ = std::move(sink); }
    void on_event(EventSink sink) { events_sink_ = std::move(sink); }

    /// Starts the tick loop (idempotent).
    void start();
    void stop();

    void follow_route(InspectionRoute route);
    /// Back to the suspended route after a teleop episode.
    void resume_route();
    /// Queues a command; it takes effect at the next tick and `reply` fires then.
    void command(const CommandMessage& cmd, ReplyFn reply);

    const RobotState& state() const noexcept { return state_; }
    void reset_state(const RobotState& s) { state_ = s; }
    const std::vector<RouteEvent>& events() const noexcept { return events_; }
    const std::string& id() const noexcept { return id_; }
    std::size_t commands_applied() const noexcept { return commands_applied_; }
    bool route_active() const noexcept { return route_.has_value() && state_.mode == RobotMode::autonomous_route; }

private:
    struct RouteProgress {
        InspectionRoute route;
        std::size_t next = 0;
        Micros dwell_until = -1;
    };
    struct Pending {
        CommandMessage cmd;
        ReplyFn reply;
    };

    void schedule_tick();
    void tick();
    void step_route(double dt);
    void step_teleop(double dt);
    void emit(RouteEventKind kind, int waypoint, std::string detail = {});
    void capture(const Waypoint& wp);
    void publish(TelemetryKind kind);
    /// Gait needed to stand at `p`, or nullopt when no gait traverses it.
    std::optional<Gait> gait_at(const Eigen::Vector2d& p, Gait preferred) const;

    netemu::Scheduler& scheduler_;
    RobotConfig config_;
    World world_;
    std::string id_;
    netemu::Rng rng_;
    RobotState state_;
    TelemetrySink telemetry_;
    EventSink events_sink_;
    std::vector<RouteEvent> events_;
    std::optional<RouteProgress> route_;
    std::vector<Pending> pending_;
    std::optional<CommandMessage> active_;
    Micros active_until_ = 0;
    Micros last_pose_ = -1;
    std::optional<netemu::EventId> tick_event_;
    std::size_t commands_applied_ = 0;
    bool running_ = false;
};

/// Runs `route` alone on a private scheduler and returns its event stream;
/// throws RouteAborted (carrying the events) on blockage or battery depletion.
std::vector<RouteEvent> follow_route(const InspectionRoute& route, const World& world = {},
                                     const RobotConfig& config = {}, std::uint64_t seed = 0,
                                     RobotState initial = {});

}  // namespace ptxlink::robot
