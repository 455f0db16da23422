#include <doctest.h>

#include <cmath>

#include "ptxlink/netemu/config.hpp"
#include "ptxlink/robot/robot.hpp"

using namespace ptxlink;
using namespace ptxlink::robot;
using protocol::Gait;

TEST_CASE("euler step moves in the world frame and clamps speed") {
    RobotState s;
    s.heading = M_PI / 2;
    const auto a = euler_step(s, Gait::walk, 0.5, 0.0, 0.0, 1.0);
    CHECK(a.position.x() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(a.position.y() == doctest::Approx(0.5));
    CHECK(a.speed == doctest::Approx(0.5));

    const auto b = euler_step(RobotState{}, Gait::stairs, 3.0, 4.0, 0.0, 1.0);
    CHECK(b.speed == doctest::Approx(0.3));
    CHECK(b.position.norm() == doctest::Approx(0.3));
    CHECK(b.position.x() / b.position.y() == doctest::Approx(0.75));

    const auto c = euler_step(RobotState{}, Gait::walk, 0, 0, 4.0, 1.0);
    CHECK(std::abs(c.heading) <= M_PI);
}

TEST_CASE("battery drains linearly per gait and halts at zero") {
    RobotConfig cfg;
    auto s = drain_battery({}, 900.0, Gait::walk, cfg);
    CHECK(s.battery == doctest::Approx(0.9));
    s = drain_battery({}, 900.0, Gait::stairs, cfg);
    CHECK(s.battery == doctest::Approx(0.8));
    s = drain_battery({}, 9'001.0, Gait::walk, cfg);
    CHECK(s.battery == 0.0);
    CHECK(s.mode == RobotMode::halted);
    CHECK(euler_step(s, Gait::walk, 1, 0, 0, 1).position == s.position);
}

TEST_CASE("commands apply for their duration and respect the battery") {
    const protocol::CommandMessage fwd{Gait::walk, 1.0, 0, 0, 2'000};
    const auto s = apply_command({}, fwd);
    CHECK(s.position.x() == doctest::Approx(2.0));
    CHECK(s.mode == RobotMode::teleop);

    RobotState empty;
    empty.battery = 0.0;
    CHECK_THROWS_AS(apply_command(empty, fwd), CommandRejected);
    RobotState halted;
    halted.mode = RobotMode::halted;
    CHECK_THROWS_AS(apply_command(halted, fwd), CommandRejected);
    CHECK_THROWS_AS(apply_command({}, {Gait::walk, NAN, 0, 0, 100}), CommandRejected);
}

TEST_CASE("step heights per gait") {
    Obstacle o;
    o.height = 0.05;
    CHECK(check_traversal(o, Gait::walk) == Traversal::traversable);
    o.height = 0.06;
    CHECK(check_traversal(o, Gait::walk) == Traversal::blocked);
    CHECK(check_traversal(o, Gait::stairs) == Traversal::traversable);
    o.height = 0.12;
    CHECK(check_traversal(o, Gait::stairs) == Traversal::traversable);
    o.height = 0.13;
    CHECK(check_traversal(o, Gait::stairs) == Traversal::blocked);
}

TEST_CASE("config, world and route files") {
    CHECK(RobotConfig::from_json({{"endurance_walk_s", 100.0}}).endurance_walk_s == 100.0);
    CHECK_THROWS_AS(RobotConfig::from_json({{"endurance_walk_s", -1.0}}), netemu::ConfigError);

    const auto w = World::from_json({{"obstacles", {{{"min", {0, 0}}, {"max", {1, 1}}, {"height", 0.1}}}},
                                     {"hotspots", {{{"x", 2}, {"y", 2}, {"pipe_temp_C", 90}}}}});
    REQUIRE(w.obstacles.size() == 1);
    CHECK(w.obstacles[0].contains({0.5, 0.5}));
    REQUIRE(w.hotspots.size() == 1);
    CHECK(*w.hotspots[0].pipe_temp_c == 90.0);
    CHECK_THROWS_AS(World::from_json(nlohmann::json::array({{{"min", {0, 0}}, {"max", {1, 1}}, {"height", 0.1}, {"kind", "lava"}}})),
                    netemu::ConfigError);
    CHECK_THROWS_AS(World::from_json(nlohmann::json::array({{{"min", {0, 0}}}})), netemu::ConfigError);

    const auto r = InspectionRoute::from_json(nlohmann::json::parse(R"([
        {"x": 1, "y": 0, "capture": "image"},
        {"x": 1, "y": 2, "dwell_s": 1.5, "capture": ["thermal", "audio_stub"]}])"));
    REQUIRE(r.waypoints.size() == 2);
    CHECK(r.waypoints[1].dwell_s == 1.5);
    CHECK(r.waypoints[1].capture == std::vector<CaptureKind>{CaptureKind::thermal_stub, CaptureKind::audio_stub});
    CHECK_THROWS_AS(InspectionRoute::from_json(nlohmann::json::array()), netemu::ConfigError);
    CHECK_THROWS_AS(InspectionRoute::from_json(nlohmann::json::parse(R"([{"x":1,"y":1},{"x":1,"y":1}])")),
                    netemu::ConfigError);
    CHECK_THROWS_AS(InspectionRoute::from_json(nlohmann::json::parse(R"([{"x":1,"y":1,"capture":"lidar"}])")),
                    netemu::ConfigError);
    CHECK_THROWS_AS(InspectionRoute::load("/nonexistent/route.json"), netemu::ConfigError);
}

TEST_CASE("small telemetry records stay under 256 bytes") {
    auto rng = netemu::make_stream(1, "tele");
    RobotState s;
    s.position = {-12345.678901, 98765.4321};
    s.heading = -3.0;
    for (auto kind : {protocol::TelemetryKind::pose, protocol::TelemetryKind::battery, protocol::TelemetryKind::thermal,
                      protocol::TelemetryKind::audio, protocol::TelemetryKind::process}) {
        const auto r = generate_telemetry(s, kind, rng, 0);
        CHECK(r.payload.size() <= kSmallRecordLimit);
        CHECK(nlohmann::json::accept(r.payload.begin(), r.payload.end()));
    }
    const auto img = generate_telemetry(s, protocol::TelemetryKind::image, rng, 0);
    CHECK(img.payload.size() > 1'000);
}

TEST_CASE("hotspots raise sensor readings") {
    World w;
    w.hotspots.push_back({{0, 0}, 2.0, 95.0, std::nullopt});
    auto rng = netemu::make_stream(2, "hot");
    RobotState s;
    auto read = [&](const RobotState& st) {
        const auto r = generate_telemetry(st, protocol::TelemetryKind::thermal, rng, 0, "robot", {}, w);
        return nlohmann::json::parse(r.payload.begin(), r.payload.end()).at("pipe_temp_C").get<double>();
    };
    CHECK(read(s) > 90.0);
    s.position = {10, 10};
    CHECK(read(s) < 50.0);
}

TEST_CASE("route events are ordered and reproducible") {
    InspectionRoute route;
    route.waypoints = {{{2, 0}, 0.0, {CaptureKind::image}},
                       {{2, 2}, 1.0, {CaptureKind::thermal_stub}},
                       {{0, 2}, 0.0, {}}};
    const auto a = follow_route(route, {}, {}, 3);
    const auto b = follow_route(route, {}, {}, 3);
    CHECK(a == b);
    std::vector<RouteEventKind> kinds;
    for (const auto& e : a) kinds.push_back(e.kind);
    CHECK(kinds == std::vector<RouteEventKind>{RouteEventKind::waypoint_reached, RouteEventKind::capture_done,
                                               RouteEventKind::waypoint_reached, RouteEventKind::capture_done,
                                               RouteEventKind::waypoint_reached, RouteEventKind::capture_done,
                                               RouteEventKind::route_complete});
    for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i].at >= a[i - 1].at);
    // Dwell delays the capture at the second waypoint.
    CHECK(a[3].at - a[2].at >= 1'000'000);
}

TEST_CASE("routes switch to stairs over a low step and abort at a high one") {
    InspectionRoute route;
    route.waypoints = {{{4, 0}, 0.0, {}}};
    World low;
    low.obstacles.push_back({{1.0, -1.0}, {2.0, 1.0}, 0.10, ObstacleKind::step});
    CHECK(follow_route(route, low).back().kind == RouteEventKind::route_complete);

    World high = low;
    high.obstacles[0].height = 0.13;
    try {
        follow_route(route, high);
        FAIL("expected RouteAborted");
    } catch (const RouteAborted& e) {
        CHECK(e.reason() == "blocked");
        REQUIRE(e.events().size() >= 2);
        CHECK(e.events()[e.events().size() - 2].kind == RouteEventKind::blocked);
    }
}

TEST_CASE("a depleted battery aborts the route") {
    InspectionRoute route;
    route.waypoints = {{{100, 0}, 0.0, {}}};
    RobotState s;
    s.battery = 0.001;  // 9 s of walking
    CHECK_THROWS_AS(follow_route(route, {}, {}, 0, s), RouteAborted);
}

TEST_CASE("agent: commands preempt the route and are applied on the tick grid") {
    netemu::Scheduler sched;
    RobotConfig cfg;
    cfg.pose_period_us = 0;
    RobotAgent agent(sched, cfg, {}, 4);
    InspectionRoute route;
    route.waypoints = {{{50, 0}, 0.0, {}}};
    agent.follow_route(route);
    agent.start();
    sched.run_until(1'000'000);
    CHECK(agent.route_active());

    std::vector<RobotAgent::CommandOutcome> outs;
    sched.schedule(1'010'000, [&] {
        agent.command({Gait::walk, 0.0, 0.5, 0.0, 1'000}, [&](const auto& o) { outs.push_back(o); });
    });
    sched.run_until(1'100'000);
    REQUIRE(outs.size() == 1);
    CHECK(outs[0].accepted);
    CHECK(outs[0].applied_at % cfg.tick_us == 0);
    CHECK(outs[0].applied_at == 1'050'000);
    CHECK_FALSE(agent.route_active());
    CHECK(agent.events().back().kind == RouteEventKind::preempted);

    const double y0 = agent.state().position.y();
    sched.run_until(2'500'000);
    CHECK(agent.state().position.y() > y0);
    agent.resume_route();
    CHECK(agent.route_active());
    agent.stop();
    CHECK(agent.commands_applied() == 1);
}

TEST_CASE("agent: a halted robot rejects commands") {
    netemu::Scheduler sched;
    RobotAgent agent(sched, {}, {}, 5);
    RobotState s;
    s.battery = 0.0;
    s.mode = RobotMode::halted;
    agent.reset_state(s);
    agent.start();
    std::optional<RobotAgent::CommandOutcome> out;
    agent.command({Gait::walk, 1, 0, 0, 100}, [&](const auto& o) { out = o; });
    sched.run_until(100'000);
    REQUIRE(out);
    CHECK_FALSE(out->accepted);
    CHECK(out->reason == "battery depleted");
    agent.stop();
}
