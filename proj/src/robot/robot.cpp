#include "ptxlink/robot/robot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "ptxlink/netemu/link.hpp"

namespace ptxlink::robot {

using netemu::ConfigError;
using nlohmann::json;

namespace {

constexpr double kBatteryEpsilon = 1e-9;
constexpr double kArrivalEpsilon = 1e-6;

std::size_t gait_index(std::string_view name) { return static_cast<std::size_t>(protocol::gait_from_string(name)); }

void read_gait_table(const json& j, const char* key, std::array<double, 4>& table) {
    if (!j.contains(key)) return;
    for (const auto& [gait, v] : j.at(key).items()) table[gait_index(gait)] = v.get<double>();
}

json read_json_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ConfigError(std::string(what) + " file not found: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + " file " + path + ": " + e.what());
    }
}

Eigen::Vector2d read_point(const json& j) {
    if (j.is_array()) return {j.at(0).get<double>(), j.at(1).get<double>()};
    return {j.at("x").get<double>(), j.at("y").get<double>()};
}

double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    return a;
}

}  // namespace

void RobotConfig::validate() const {
    for (std::size_t i = 0; i < 4; ++i) {
        if (!(speed_cap[i] >= 0.0) || !(step_cap[i] >= 0.0) || !(drain_coeff[i] >= 0.0))
            throw ConfigError("robot caps and drain coefficients must be >= 0");
    }
    if (!(endurance_walk_s > 0.0)) throw ConfigError("endurance_walk_s must be positive");
    if (tick_us <= 0) throw ConfigError("tick must be positive");
    if (pose_period_us < 0) throw ConfigError("pose period must be >= 0");
    image.validate();
}

RobotConfig RobotConfig::from_json(const json& j) {
    RobotConfig c;
    try {
        read_gait_table(j, "speed_cap", c.speed_cap);
        read_gait_table(j, "step_cap", c.step_cap);
        read_gait_table(j, "drain", c.drain_coeff);
        c.endurance_walk_s = j.value("endurance_walk_s", c.endurance_walk_s);
        if (j.contains("tick_ms")) c.tick_us = netemu::from_ms(j.at("tick_ms").get<double>());
        if (j.contains("pose_period_ms")) c.pose_period_us = netemu::from_ms(j.at("pose_period_ms").get<double>());
        if (j.contains("image")) {
            const auto& im = j.at("image");
            c.image.mean_bytes = im.value("mean_bytes", c.image.mean_bytes);
            c.image.sigma_ratio = im.value("sigma_ratio", c.image.sigma_ratio);
            c.image.min_bytes = im.value("min_bytes", c.image.min_bytes);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("robot config: ") + e.what());
    } catch (const protocol::InvalidCommand& e) {
        throw ConfigError(std::string("robot config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string_view to_string(RobotMode m) {
    switch (m) {
        case RobotMode::autonomous_route: return "autonomous_route";
        case RobotMode::teleop: return "teleop";
        case RobotMode::halted: return "halted";
    }
    return "unknown";
}

// --- kinematics -------------------------------------------------------------

RobotState drain_battery(RobotState s, double dt_s, Gait gait, const RobotConfig& cfg) {
    if (!(dt_s > 0.0)) return s;
    s.battery -= dt_s * cfg.drain_for(gait) / cfg.endurance_walk_s;
    if (s.battery <= kBatteryEpsilon) {
        s.battery = 0.0;
        s.mode = RobotMode::halted;
        s.speed = 0.0;
    }
    return s;
}

RobotState euler_step(RobotState s, Gait gait, double vx, double vy, double yaw_rate, double dt_s,
                      const RobotConfig& cfg) {
    if (s.mode == RobotMode::halted) return s;
    Eigen::Vector2d v(vx, vy);
    const double cap = cfg.speed_cap_for(gait);
    const double norm = v.norm();
    if (norm > cap) v *= norm > 0.0 ? cap / norm : 0.0;
    const Eigen::Vector2d world = Eigen::Rotation2Dd(s.heading) * v;
    s.position += world * dt_s;
    s.heading = wrap_angle(s.heading + yaw_rate * dt_s);
    s.gait = gait;
    s.speed = v.norm();
    return drain_battery(s, dt_s, gait, cfg);
}

RobotState apply_command(const RobotState& s, const CommandMessage& cmd, const RobotConfig& cfg) {
    if (s.mode == RobotMode::halted) throw CommandRejected("robot is halted");
    if (s.battery <= 0.0) throw CommandRejected("battery depleted");
    if (!std::isfinite(cmd.vx) || !std::isfinite(cmd.vy) || !std::isfinite(cmd.yaw_rate))
        throw CommandRejected("non-finite velocity");
    RobotState out = s;
    out.mode = RobotMode::teleop;
    out.gait = cmd.gait;
    const Micros total = static_cast<Micros>(cmd.duration_ms) * netemu::kMicrosPerMs;
    for (Micros t = 0; t < total && out.mode != RobotMode::halted; t += cfg.tick_us) {
        const double dt = netemu::to_seconds(std::min(cfg.tick_us, total - t));
        out = euler_step(out, cmd.gait, cmd.vx, cmd.vy, cmd.yaw_rate, dt, cfg);
    }
    return out;
}

Traversal check_traversal(const Obstacle& obstacle, Gait gait, const RobotConfig& cfg) {
    return obstacle.height <= cfg.step_cap_for(gait) + 1e-12 ? Traversal::traversable : Traversal::blocked;
}

// --- world and route files --------------------------------------------------

World World::from_json(const json& j) {
    World w;
    try {
        const json& obstacles = j.is_array() ? j : j.value("obstacles", json::array());
        for (const auto& o : obstacles) {
            Obstacle ob;
            const Eigen::Vector2d a = read_point(o.at("min"));
            const Eigen::Vector2d b = read_point(o.at("max"));
            ob.min = a.cwiseMin(b);
            ob.max = a.cwiseMax(b);
            ob.height = o.at("height").get<double>();
            const auto kind = o.value("kind", std::string("step"));
            if (kind == "step") {
                ob.kind = ObstacleKind::step;
            } else if (kind == "clutter") {
                ob.kind = ObstacleKind::clutter;
            } else {
                throw ConfigError("unknown obstacle kind '" + kind + "'");
            }
            if (!(ob.height >= 0.0)) throw ConfigError("obstacle height must be >= 0");
            w.obstacles.push_back(ob);
        }
        if (j.is_object()) {
            for (const auto& h : j.value("hotspots", json::array())) {
                Hotspot hs;
                hs.center = read_point(h);
                hs.radius = h.value("radius", 1.0);
                if (h.contains("pipe_temp_C")) hs.pipe_temp_c = h.at("pipe_temp_C").get<double>();
                if (h.contains("sound_level_dB")) hs.sound_level_db = h.at("sound_level_dB").get<double>();
                w.hotspots.push_back(hs);
            }
            w.ambient_pipe_temp_c = j.value("ambient_pipe_temp_C", w.ambient_pipe_temp_c);
            w.ambient_sound_db = j.value("ambient_sound_dB", w.ambient_sound_db);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("world file: ") + e.what());
    }
    return w;
}

World World::load(const std::string& path) { return from_json(read_json_file(path, "world")); }

std::string_view to_string(CaptureKind c) {
    switch (c) {
        case CaptureKind::image: return "image";
        case CaptureKind::thermal_stub: return "thermal_stub";
        case CaptureKind::audio_stub: return "audio_stub";
    }
    return "unknown";
}

CaptureKind capture_kind_from_string(std::string_view s) {
    if (s == "image") return CaptureKind::image;
    if (s == "thermal_stub" || s == "thermal") return CaptureKind::thermal_stub;
    if (s == "audio_stub" || s == "audio") return CaptureKind::audio_stub;
    throw ConfigError("unknown capture kind '" + std::string(s) + "'");
}

void InspectionRoute::validate() const {
    if (waypoints.empty()) throw ConfigError("route has no waypoints");
    for (std::size_t i = 0; i < waypoints.size(); ++i) {
        const auto& w = waypoints[i];
        if (!w.position.allFinite() || !(w.dwell_s >= 0.0)) throw ConfigError("waypoint " + std::to_string(i) + " invalid");
        if (i > 0 && (w.position - waypoints[i - 1].position).norm() < kArrivalEpsilon)
            throw ConfigError("waypoints " + std::to_string(i - 1) + " and " + std::to_string(i) + " coincide");
    }
}

InspectionRoute InspectionRoute::from_json(const json& j) {
    InspectionRoute r;
    try {
        const json& list = j.is_array() ? j : j.at("waypoints");
        for (const auto& w : list) {
            Waypoint wp;
            wp.position = read_point(w);
            wp.dwell_s = w.value("dwell_s", 0.0);
            if (w.contains("capture")) {
                const auto& c = w.at("capture");
                if (c.is_string()) {
                    wp.capture.push_back(capture_kind_from_string(c.get<std::string>()));
                } else {
                    for (const auto& k : c) wp.capture.push_back(capture_kind_from_string(k.get<std::string>()));
                }
            }
            r.waypoints.push_back(std::move(wp));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("route file: ") + e.what());
    }
    r.validate();
    return r;
}

InspectionRoute InspectionRoute::load(const std::string& path) { return from_json(read_json_file(path, "route")); }

// --- telemetry --------------------------------------------------------------

TelemetryRecord generate_telemetry(const RobotState& s, TelemetryKind kind, netemu::Rng& rng, Micros now,
                                   const std::string& source, const RobotConfig& cfg, const World& world) {
    TelemetryRecord r;
    r.source = source;
    r.kind = kind;
    r.timestamp_us = now;
    json body;
    switch (kind) {
        case TelemetryKind::image: {
            const auto size = cfg.image.sample(rng);
            r.payload = protocol::synthetic_payload(size, rng());
            return r;
        }
        case TelemetryKind::pose:
            body = {{"x", s.position.x()},
                    {"y", s.position.y()},
                    {"heading", s.heading},
                    {"gait", protocol::to_string(s.gait)},
                    {"battery", s.battery}};
            break;
        case TelemetryKind::battery:
            body = {{"battery", s.battery}, {"mode", to_string(s.mode)}};
            break;
        case TelemetryKind::thermal: {
            double t = world.ambient_pipe_temp_c;
            for (const auto& h : world.hotspots) {
                if (h.pipe_temp_c && (s.position - h.center).norm() <= h.radius) t = std::max(t, *h.pipe_temp_c);
            }
            body = {{"pipe_temp_C", t + std::normal_distribution<double>(0.0, 0.5)(rng)}};
            break;
        }
        case TelemetryKind::audio: {
            double db = world.ambient_sound_db;
            for (const auto& h : world.hotspots) {
                if (h.sound_level_db && (s.position - h.center).norm() <= h.radius) db = std::max(db, *h.sound_level_db);
            }
            body = {{"sound_level_dB", db + std::normal_distribution<double>(0.0, 1.0)(rng)}};
            break;
        }
        case TelemetryKind::process:
            body = {{"value", 0.0}};
            break;
    }
    r.payload = protocol::to_bytes(body.dump());
    return r;
}

// --- events -----------------------------------------------------------------

std::string_view to_string(RouteEventKind k) {
    switch (k) {
        case RouteEventKind::waypoint_reached: return "waypoint_reached";
        case RouteEventKind::capture_done: return "capture_done";
        case RouteEventKind::route_complete: return "route_complete";
        case RouteEventKind::blocked: return "blocked";
        case RouteEventKind::route_aborted: return "route_aborted";
        case RouteEventKind::preempted: return "preempted";
    }
    return "unknown";
}

RouteAborted::RouteAborted(std::string reason, std::vector<RouteEvent> events)
    : std::runtime_error("route aborted: " + reason), reason_(std::move(reason)), events_(std::move(events)) {}

// --- agent ------------------------------------------------------------------

RobotAgent::RobotAgent(netemu::Scheduler& scheduler, RobotConfig config, World world, std::uint64_t seed,
                       std::string id)
    : scheduler_(scheduler),
      config_(std::move(config)),
      world_(std::move(world)),
      id_(std::move(id)),
      rng_(netemu::make_stream(seed, "robot/" + id_)) {
    config_.validate();
}

void RobotAgent::start() {
    if (running_) return;
    running_ = true;
    const Micros now = scheduler_.now();
    const Micros first = ((now + config_.tick_us - 1) / config_.tick_us) * config_.tick_us;
    tick_event_ = scheduler_.schedule(first, [this] { tick(); }, "robot-tick");
}

void RobotAgent::stop() {
    running_ = false;
    if (tick_event_) scheduler_.cancel(*tick_event_);
    tick_event_.reset();
}

void RobotAgent::schedule_tick() {
    if (!running_) return;
    tick_event_ = scheduler_.schedule_after(config_.tick_us, [this] { tick(); }, "robot-tick");
}

void RobotAgent::follow_route(InspectionRoute route) {
    route.validate();
    if (state_.mode == RobotMode::halted) throw RouteAborted("robot is halted", events_);
    route_ = RouteProgress{std::move(route), 0, -1};
    state_.mode = RobotMode::autonomous_route;
    active_.reset();
}

void RobotAgent::resume_route() {
    if (!route_ || state_.mode == RobotMode::halted) return;
    state_.mode = RobotMode::autonomous_route;
    active_.reset();
}

void RobotAgent::command(const CommandMessage& cmd, ReplyFn reply) { pending_.push_back({cmd, std::move(reply)}); }

void RobotAgent::emit(RouteEventKind kind, int waypoint, std::string detail) {
    events_.push_back({kind, scheduler_.now(), waypoint, std::move(detail)});
    if (events_sink_) events_sink_(events_.back());
}

void RobotAgent::publish(TelemetryKind kind) {
    auto rec = generate_telemetry(state_, kind, rng_, scheduler_.now(), id_, config_, world_);
    if (telemetry_) telemetry_(std::move(rec));
}

void RobotAgent::capture(const Waypoint& wp) {
    std::string detail;
    for (const auto c : wp.capture) {
        switch (c) {
            case CaptureKind::image: publish(TelemetryKind::image); break;
            case CaptureKind::thermal_stub: publish(TelemetryKind::thermal); break;
            case CaptureKind::audio_stub: publish(TelemetryKind::audio); break;
        }
        if (!detail.empty()) detail += ",";
        detail += to_string(c);
    }
    emit(RouteEventKind::capture_done, static_cast<int>(route_->next), detail);
}

std::optional<Gait> RobotAgent::gait_at(const Eigen::Vector2d& p, Gait preferred) const {
    double h = 0.0;
    for (const auto& o : world_.obstacles) {
        if (o.contains(p)) h = std::max(h, o.height);
    }
    Obstacle probe;
    probe.height = h;
    if (check_traversal(probe, preferred, config_) == Traversal::traversable) return preferred;
    if (preferred != Gait::idle && check_traversal(probe, Gait::stairs, config_) == Traversal::traversable)
        return Gait::stairs;
    return std::nullopt;
}

void RobotAgent::tick() {
    tick_event_.reset();
    const double dt = netemu::to_seconds(config_.tick_us);

    auto pending = std::move(pending_);
    pending_.clear();
    for (auto& p : pending) {
        CommandOutcome out;
        out.applied_at = scheduler_.now();
        if (state_.mode == RobotMode::halted || state_.battery <= 0.0) {
            out.reason = state_.battery <= 0.0 ? "battery depleted" : "robot is halted";
        } else if (!std::isfinite(p.cmd.vx) || !std::isfinite(p.cmd.vy) || !std::isfinite(p.cmd.yaw_rate)) {
            out.reason = "non-finite velocity";
        } else {
            if (state_.mode == RobotMode::autonomous_route && route_) {
                emit(RouteEventKind::preempted, static_cast<int>(route_->next), "teleop");
            }
            state_.mode = RobotMode::teleop;
            state_.gait = p.cmd.gait;
            active_ = p.cmd;
            active_until_ = scheduler_.now() + static_cast<Micros>(p.cmd.duration_ms) * netemu::kMicrosPerMs;
            out.accepted = true;
            ++commands_applied_;
        }
        out.state = state_;
        if (p.reply) p.reply(out);
    }

    const bool had_route = route_active();
    if (state_.mode == RobotMode::autonomous_route && route_) {
        step_route(dt);
    } else if (state_.mode == RobotMode::teleop && active_ && scheduler_.now() < active_until_) {
        step_teleop(dt);
    } else if (state_.mode != RobotMode::halted) {
        if (active_ && scheduler_.now() >= active_until_) active_.reset();
        state_.speed = 0.0;
        state_ = drain_battery(state_, dt, state_.gait, config_);
    }

    if (state_.mode == RobotMode::halted && state_.battery <= 0.0) {
        if (had_route && route_) {
            emit(RouteEventKind::route_aborted, static_cast<int>(route_->next), "battery");
            route_.reset();
        }
        active_.reset();
    }

    if (config_.pose_period_us > 0 && (last_pose_ < 0 || scheduler_.now() - last_pose_ >= config_.pose_period_us)) {
        last_pose_ = scheduler_.now();
        publish(TelemetryKind::pose);
    }
    schedule_tick();
}

void RobotAgent::step_route(double dt) {
    auto& rp = *route_;
    const Micros now = scheduler_.now();
    if (rp.dwell_until >= 0) {
        if (now < rp.dwell_until) {
            state_.speed = 0.0;
            state_.gait = Gait::idle;
            state_ = drain_battery(state_, dt, Gait::idle, config_);
            return;
        }
        capture(rp.route.waypoints[rp.next]);
        rp.dwell_until = -1;
        if (++rp.next == rp.route.waypoints.size()) {
            emit(RouteEventKind::route_complete, -1);
            route_.reset();
            state_.speed = 0.0;
            state_.gait = Gait::idle;
            return;
        }
    }

    const Waypoint& wp = rp.route.waypoints[rp.next];
    const Eigen::Vector2d delta = wp.position - state_.position;
    const double dist = delta.norm();
    const Eigen::Vector2d dir = dist > 0.0 ? Eigen::Vector2d(delta / dist) : Eigen::Vector2d::UnitX();

    Gait gait = Gait::walk;
    auto probe = [&](Gait g) { return state_.position + dir * std::min(config_.speed_cap_for(g) * dt, dist); };
    auto needed = gait_at(probe(Gait::walk), Gait::walk);
    if (needed && *needed == Gait::stairs) needed = gait_at(probe(Gait::stairs), Gait::stairs);
    if (!needed) {
        state_.speed = 0.0;
        emit(RouteEventKind::blocked, static_cast<int>(rp.next), "obstacle exceeds step height");
        emit(RouteEventKind::route_aborted, static_cast<int>(rp.next), "blocked");
        route_.reset();
        // Operator intervention is the only way out.
        state_.mode = RobotMode::teleop;
        state_ = drain_battery(state_, dt, state_.gait, config_);
        return;
    }
    gait = *needed;

    if (dist > 0.0) state_.heading = std::atan2(dir.y(), dir.x());
    const double v = std::min(config_.speed_cap_for(gait), dist / dt);
    state_ = euler_step(state_, gait, v, 0.0, 0.0, dt, config_);
    if (state_.mode == RobotMode::halted) return;

    if ((wp.position - state_.position).norm() < kArrivalEpsilon) {
        state_.position = wp.position;
        emit(RouteEventKind::waypoint_reached, static_cast<int>(rp.next));
        rp.dwell_until = now + netemu::from_seconds(wp.dwell_s);
        if (wp.dwell_s == 0.0) {
            // Capture without waiting another tick.
            state_.speed = 0.0;
            capture(wp);
            rp.dwell_until = -1;
            if (++rp.next == rp.route.waypoints.size()) {
                emit(RouteEventKind::route_complete, -1);
                route_.reset();
                state_.gait = Gait::idle;
            }
        }
    }
}

void RobotAgent::step_teleop(double dt) {
    const auto& cmd = *active_;
    const RobotState next = euler_step(state_, cmd.gait, cmd.vx, cmd.vy, cmd.yaw_rate, dt, config_);
    if (!gait_at(next.position, cmd.gait) || *gait_at(next.position, cmd.gait) != cmd.gait) {
        // Commanded gait cannot clear what lies ahead: hold position.
        emit(RouteEventKind::blocked, -1, "teleop motion blocked");
        active_.reset();
        state_.speed = 0.0;
        state_ = drain_battery(state_, dt, cmd.gait, config_);
        return;
    }
    state_ = next;
}

std::vector<RouteEvent> follow_route(const InspectionRoute& route, const World& world, const RobotConfig& config,
                                     std::uint64_t seed, RobotState initial) {
    netemu::Scheduler sched;
    RobotAgent agent(sched, config, world, seed);
    agent.reset_state(initial);
    bool done = false;
    std::string reason;
    agent.on_event([&](const RouteEvent& e) {
        if (e.kind == RouteEventKind::route_complete) done = true;
        if (e.kind == RouteEventKind::route_aborted) {
            done = true;
            reason = e.detail;
        }
    });
    agent.follow_route(route);
    agent.start();
    sched.run_while([&] { return !done; });
    agent.stop();
    if (!reason.empty()) throw RouteAborted(reason, agent.events());
    return agent.events();
}

}  // namespace ptxlink::robot
