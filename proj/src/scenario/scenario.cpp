#include "ptxlink/scenario/scenario.hpp"

#include <algorithm>

namespace ptxlink::scenario {

using protocol::Bytes;
using protocol::Frame;
using protocol::MsgType;

namespace {

// Reason prefix of replies generated by the jump host rather than the robot.
constexpr std::string_view kHostPrefix = "jump_host: ";

netemu::ProfileSet profiles_with(const nlohmann::json& overrides) {
    auto profiles = netemu::ProfileSet::builtin();
    if (!overrides.is_null() && !overrides.empty()) profiles.merge_json(overrides);
    return profiles;
}

netemu::Topology topology_for(const std::string& scenario, const std::string& local, const nlohmann::json& overrides) {
    netemu::TopologyOptions opts;
    opts.local_network = netemu::normalize_name(local);
    auto topo = netemu::build_topology(scenario, profiles_with(overrides), opts);
    topo.validate();
    return topo;
}

}  // namespace

// --- Network ----------------------------------------------------------------

Network::Network(const netemu::Topology& topo, std::uint64_t seed, double delay_scale)
    : topo_(topo), seed_(seed), scale_(delay_scale) {}

netemu::Link& Network::directed(const netemu::TopologyLink& l, const std::string& from, const std::string& to) {
    const auto index = static_cast<std::size_t>(&l - topo_.links.data());
    const std::string key = from + ">" + to + "#" + std::to_string(index);
    auto it = links_.find(key);
    if (it == links_.end()) {
        auto p = scale_ == 1.0 ? l.profile : l.profile.scaled(scale_);
        const std::string domain = p.jitter_seed_domain.empty() ? p.name : p.jitter_seed_domain;
        p.jitter_seed_domain = domain + "/" + from + ">" + to;
        it = links_.emplace(key, netemu::Link(std::move(p), seed_)).first;
    }
    return it->second;
}

netemu::LinkPath Network::path(std::string_view from, std::string_view to, const std::set<netemu::Medium>& avoid,
                               Micros forwarding_us) {
    const auto route = topo_.route(from, to, avoid);
    if (!route || route->empty())
        throw netemu::ConfigError("no route from " + std::string(from) + " to " + std::string(to));
    std::vector<netemu::Link*> hops;
    for (const auto& hop : *route) hops.push_back(&directed(*hop.link, hop.from, hop.to));
    return netemu::LinkPath(std::move(hops), forwarding_us);
}

std::vector<netemu::Link*> Network::links_with(netemu::Medium m) {
    // Instantiate both directions so outages apply before first use.
    for (const auto& l : topo_.links) {
        if (l.profile.medium != m) continue;
        directed(l, l.a, l.b);
        directed(l, l.b, l.a);
    }
    std::vector<netemu::Link*> out;
    for (auto& [key, link] : links_)
        if (link.profile().medium == m) out.push_back(&link);
    return out;
}

std::vector<netemu::Link*> Network::shore_links() {
    std::vector<netemu::Link*> out;
    for (const auto& l : topo_.links) {
        const bool a_shore = netemu::zone_of(topo_.node(l.a).role) == netemu::Zone::shore;
        const bool b_shore = netemu::zone_of(topo_.node(l.b).role) == netemu::Zone::shore;
        if (a_shore == b_shore) continue;
        out.push_back(&directed(l, l.a, l.b));
        out.push_back(&directed(l, l.b, l.a));
    }
    return out;
}

// --- TeleopEngine -----------------------------------------------------------

TeleopEngine::TeleopEngine(TeleopConfig config)
    : config_(std::move(config)),
      net_(std::make_unique<Network>(topology_for(config_.scenario, config_.local_network, config_.profile_overrides),
                                     config_.seed)),
      jump_host_(config_.registry, config_.jump_host, config_.seed) {
    robot_ = std::make_unique<robot::RobotAgent>(sched_, config_.robot, config_.world, config_.seed);

    const auto& avoid = config_.avoid;
    uplink_ = std::make_unique<protocol::ArqChannel>(
        sched_, net_->path("control_room", "jump_host", avoid), net_->path("jump_host", "control_room", avoid),
        config_.arq, "cr>jh", [this](const Frame& f) { at_jump_host(f); }, &trace_);
    downlink_ = std::make_unique<protocol::ArqChannel>(
        sched_, net_->path("jump_host", "control_room", avoid), net_->path("control_room", "jump_host", avoid),
        config_.arq, "jh>cr", [this](const Frame& f) { at_control_room(f); }, &trace_);
    to_robot_ = std::make_unique<protocol::ArqChannel>(
        sched_, net_->path("jump_host", "robot"), net_->path("robot", "jump_host"), config_.arq, "jh>robot",
        [this](const Frame& f) { at_robot(f); }, &trace_);
    // Robot replies are relayed unchanged to the control room.
    from_robot_ = std::make_unique<protocol::ArqChannel>(
        sched_, net_->path("robot", "jump_host"), net_->path("jump_host", "robot"), config_.arq, "robot>jh",
        [this](const Frame& f) {
            if (f.type == MsgType::ack && !f.payload.empty()) downlink_->send_reliable(MsgType::ack, f.payload);
        },
        &trace_);

    robot_->start();
    if (config_.route) robot_->follow_route(*config_.route);
}

TeleopEngine::ConsoleId TeleopEngine::open_console(const std::string& token, AuthFn on_auth) {
    const ConsoleId id = next_console_++;
    auto& c = consoles_.emplace(id, Console{protocol::SessionClient(token), std::move(on_auth), {}, {}}).first->second;
    auth_waiting_.push_back(id);
    uplink_->send_reliable(MsgType::auth, c.client.auth_request());
    return id;
}

std::optional<std::uint32_t> TeleopEngine::send_command(ConsoleId console, const protocol::CommandMessage& cmd,
                                                        ReplyFn on_reply) {
    auto it = consoles_.find(console);
    if (it == consoles_.end() || !it->second.client.established()) return std::nullopt;
    auto& c = it->second;
    auto payload = c.client.seal(cmd);
    const auto id = c.client.last_command_id();
    c.pending[id] = {sched_.now(), std::move(on_reply)};
    c.last_payload = payload;
    uplink_->send_reliable(MsgType::command, std::move(payload));
    return id;
}

const Bytes& TeleopEngine::last_payload(ConsoleId console) const {
    static const Bytes empty;
    auto it = consoles_.find(console);
    return it == consoles_.end() ? empty : it->second.last_payload;
}

void TeleopEngine::inject_command_payload(Bytes payload) {
    uplink_->send_reliable(MsgType::command, std::move(payload));
}

void TeleopEngine::at_jump_host(const Frame& f) {
    if (f.type == MsgType::auth) {
        downlink_->send_reliable(MsgType::auth, jump_host_.handle_auth(f.payload, sched_.now()));
        return;
    }
    if (f.type != MsgType::command) return;
    sched_.schedule_after(
        config_.jump_host.tunnel_hop_us,
        [this, payload = f.payload] {
            try {
                jump_host_.tunnel_command(payload, sched_.now());
                to_robot_->send_reliable(MsgType::command, payload);
            } catch (const jumphost::TunnelError& e) {
                protocol::CommandReply r;
                if (payload.size() >= 12) {
                    // Best-effort addressing; a malformed payload has neither field.
                    try {
                        const auto s = protocol::parse_sealed_command(payload);
                        r.session = s.session;
                        r.command_id = s.command_id;
                    } catch (const std::exception&) {
                    }
                }
                r.status = protocol::ReplyStatus::rejected;
                r.reason = std::string(kHostPrefix) + std::string(jumphost::to_string(e.reason()));
                reply_to_control_room(r);
            }
        },
        "tunnel");
}

void TeleopEngine::reply_to_control_room(const protocol::CommandReply& r) {
    downlink_->send_reliable(MsgType::ack, protocol::encode_command_reply(r));
}

void TeleopEngine::at_robot(const Frame& f) {
    if (f.type != MsgType::command) return;
    protocol::SealedCommand sealed;
    try {
        sealed = protocol::parse_sealed_command(f.payload);
    } catch (const std::exception&) {
        return;
    }
    receipts_.push_back({sched_.now(), sealed.session, sealed.command_id});
    robot_->command(sealed.command, [this, session = sealed.session, id = sealed.command_id](
                                        const robot::RobotAgent::CommandOutcome& o) {
        protocol::CommandReply r;
        r.session = session;
        r.command_id = id;
        r.status = o.accepted ? protocol::ReplyStatus::accepted : protocol::ReplyStatus::rejected;
        r.reason = o.reason;
        r.x = o.state.position.x();
        r.y = o.state.position.y();
        r.heading = o.state.heading;
        r.battery = o.state.battery;
        r.gait = o.state.gait;
        from_robot_->send_reliable(MsgType::ack, protocol::encode_command_reply(r));
    });
}

void TeleopEngine::at_control_room(const Frame& f) {
    if (f.type == MsgType::auth) {
        if (auth_waiting_.empty()) return;
        const auto id = auth_waiting_.front();
        auth_waiting_.pop_front();
        auto& c = consoles_.at(id);
        AuthResult res;
        try {
            c.client.accept_reply(f.payload);
            const auto reply = protocol::decode_auth_reply(f.payload);
            res = {true, reply.session, static_cast<Micros>(reply.expires_at_us), reply.allowed_ops};
        } catch (const protocol::AuthRejected&) {
            res.ok = false;
        }
        if (c.on_auth) c.on_auth(res);
        return;
    }
    if (f.type != MsgType::ack || f.payload.empty()) return;
    const auto r = protocol::decode_command_reply(f.payload);
    for (auto& [id, c] : consoles_) {
        if (!c.client.established() || c.client.session() != r.session) continue;
        auto p = c.pending.find(r.command_id);
        if (p == c.pending.end()) break;
        auto [sent_at, cb] = std::move(p->second);
        c.pending.erase(p);
        if (cb) cb(Reply{r, sent_at, sched_.now()});
        return;
    }
    unrouted_.push_back(r);
}

std::size_t TeleopEngine::unanswered() const {
    std::size_t n = 0;
    for (const auto& [id, c] : consoles_) n += c.pending.size();
    return n;
}

// --- teleop scenario --------------------------------------------------------

TeleopSpec TeleopSpec::defaults() {
    TeleopSpec s;
    const auto cmd = protocol::op_bit(MsgType::command);
    const auto tel = protocol::op_bit(MsgType::telemetry);
    s.engine.registry = jumphost::OperatorRegistry({
        {"operator", "operator-token", cmd | tel, std::nullopt},
        {"viewer", "viewer-token", tel, std::nullopt},
        {"contractor", "contractor-token", cmd, netemu::from_seconds(3.0)},
    });
    return s;
}

TeleopResult run_teleop(const TeleopSpec& spec) {
    if (spec.rate_hz <= 0.0) throw netemu::ConfigError("teleop rate_hz must be > 0");
    protocol::validate(spec.command, spec.engine.jump_host.caps);

    TeleopEngine engine(spec.engine);
    auto& sched = engine.scheduler();
    TeleopResult res;
    const Micros period = std::max<Micros>(1, netemu::from_seconds(1.0 / spec.rate_hz));

    auto on_reply = [&res](const TeleopEngine::Reply& r) {
        if (r.reply.status == protocol::ReplyStatus::accepted) {
            ++res.accepted;
            res.rtt_ms.push_back(r.rtt_ms());
        } else if (r.reply.reason.rfind(kHostPrefix, 0) != 0) {
            ++res.rejected_by_robot;
        }
    };

    TeleopEngine::ConsoleId main = 0;
    main = engine.open_console(spec.token, [&](const TeleopEngine::AuthResult& a) {
        if (!a.ok) return;
        for (std::size_t k = 0; k < spec.commands; ++k)
            sched.schedule_after(Micros(k) * period, [&] { engine.send_command(main, spec.command, on_reply); });
    });

    Micros horizon = netemu::from_seconds(1.0) + Micros(spec.commands) * period;
    if (spec.adversarial) {
        netemu::Rng rng = netemu::make_stream(spec.engine.seed, "adversary");
        const auto viewer = engine.open_console("viewer-token", {});
        const auto contractor = engine.open_console("contractor-token", {});

        // Unknown session sealed under a random key.
        sched.schedule(netemu::from_seconds(1.0), [&engine, &rng, cmd = spec.command] {
            protocol::SessionKey key{};
            for (auto& b : key) b = static_cast<std::uint8_t>(rng() & 0xFF);
            engine.inject_command_payload(protocol::seal_command(key, rng() | 1, 1, cmd));
        });
        // Valid session, flipped tag bit.
        sched.schedule(netemu::from_seconds(1.5), [&engine, main] {
            auto p = engine.last_payload(main);
            if (p.empty()) return;
            p.back() ^= 0x01;
            engine.inject_command_payload(std::move(p));
        });
        // Byte-exact replay of an already forwarded command.
        sched.schedule(netemu::from_seconds(2.0), [&engine, main] {
            auto p = engine.last_payload(main);
            if (!p.empty()) engine.inject_command_payload(std::move(p));
        });
        // Session without command rights.
        sched.schedule(netemu::from_seconds(2.5),
                       [&engine, viewer, cmd = spec.command, on_reply] { engine.send_command(viewer, cmd, on_reply); });
        // Legitimate command while valid, then one after expiry.
        sched.schedule(netemu::from_seconds(1.2), [&engine, contractor, cmd = spec.command, on_reply] {
            engine.send_command(contractor, cmd, on_reply);
        });
        sched.schedule(netemu::from_seconds(5.0), [&engine, contractor, cmd = spec.command, on_reply] {
            engine.send_command(contractor, cmd, on_reply);
        });
        horizon = std::max(horizon, netemu::from_seconds(5.0));
    }

    sched.run_until(horizon + netemu::from_seconds(5.0));

    res.unanswered = engine.unanswered();
    res.receipts = engine.receipts();
    res.audit = engine.jump_host().audit().entries();
    for (const auto& e : res.audit) {
        if (e.event != jumphost::AuditEvent::cmd_rejected && e.event != jumphost::AuditEvent::session_expired) continue;
        const auto colon = e.detail.find(':');
        ++res.rejected_by_host[colon == std::string::npos ? e.detail : e.detail.substr(0, colon)];
    }
    res.bypass = jumphost::check_zero_bypass(res.audit, res.receipts);
    res.audit_verdict = jumphost::verify_audit(res.audit);
    res.final_state = engine.robot().state();
    res.trace = engine.trace();
    return res;
}


nlohmann::json report_json(const TeleopResult& r) {
    nlohmann::json j;
    j["mode"] = "teleop";
    j["rtt_ms"] = r.rtt_ms.empty() ? nlohmann::json(nullptr) : metrics::to_json(metrics::summarize(r.rtt_ms));
    j["accepted"] = r.accepted;
    j["rejected_by_robot"] = r.rejected_by_robot;
    j["rejected_by_host"] = r.rejected_by_host;
    j["unanswered"] = r.unanswered;
    j["receipts"] = r.receipts.size();
    j["audit_entries"] = r.audit.size();
    j["audit_intact"] = r.audit_verdict.intact;
    j["bypass"] = {{"ok", r.bypass.ok()}, {"matched", r.bypass.matched}, {"violations", r.bypass.violations}};
    j["final_state"] = {{"x", r.final_state.position.x()},
                        {"y", r.final_state.position.y()},
                        {"heading", r.final_state.heading},
                        {"battery", r.final_state.battery},
                        {"mode", std::string(robot::to_string(r.final_state.mode))}};
    return j;
}

// --- inspection round -------------------------------------------------------

robot::InspectionRoute default_route() {
    using robot::CaptureKind;
    robot::InspectionRoute r;
    r.waypoints = {
        {Eigen::Vector2d(10.0, 0.0), 5.0, {CaptureKind::image, CaptureKind::thermal_stub}},
        {Eigen::Vector2d(10.0, 15.0), 5.0, {CaptureKind::image, CaptureKind::audio_stub}},
        {Eigen::Vector2d(0.0, 15.0), 5.0, {CaptureKind::thermal_stub, CaptureKind::audio_stub}},
        {Eigen::Vector2d(0.0, 0.0), 0.0, {CaptureKind::image}},
    };
    return r;
}

InspectionResult run_inspection(const InspectionSpec& spec) {
    spec.route.validate();
    Network net(topology_for(spec.scenario, spec.local_network, spec.profile_overrides), spec.seed);
    netemu::Scheduler sched;
    InspectionResult res;

    aggregation::TelemetryLog log;
    aggregation::RuleEngine rules(spec.rules);
    aggregation::TwinEndpoint twin;
    metrics::AccountingSink sink;

    protocol::ArqConfig up_cfg;
    up_cfg.window = 16;
    protocol::ArqChannel up(
        sched, net.path("robot", "aggregation"), net.path("aggregation", "robot"), up_cfg, "robot>agg",
        [&](const Frame& f) {
            if (f.type != MsgType::telemetry) return;
            auto rec = protocol::decode_telemetry(f.payload);
            for (auto& a : rules.evaluate(rec)) res.alarms.push_back(std::move(a));
            log.ingest(std::move(rec), sched.now());
        },
        &res.trace);
    protocol::ArqConfig fwd_cfg;
    fwd_cfg.window = 4;
    protocol::ArqChannel fwd(sched, net.path("aggregation", "shore_cloud"), net.path("shore_cloud", "aggregation"),
                             fwd_cfg, "agg>twin", [&](const Frame& f) { twin.deliver(f); }, &res.trace);
    sink.attach(up);
    sink.attach(fwd);

    if (spec.shore_outage)
        for (auto* l : net.shore_links()) l->add_outage(spec.shore_outage->first, spec.shore_outage->second);

    aggregation::Forwarder forwarder(sched, log, fwd, spec.forwarder);
    robot::RobotAgent agent(sched, spec.robot, spec.world, spec.seed);
    bool done = false;
    agent.on_telemetry([&](protocol::TelemetryRecord rec) {
        ++res.generated;
        up.send_reliable(MsgType::telemetry, protocol::encode_telemetry(rec));
    });
    agent.on_event([&](const robot::RouteEvent& e) {
        if (e.kind == robot::RouteEventKind::route_complete) done = true;
        if (e.kind == robot::RouteEventKind::route_aborted) {
            done = true;
            res.aborted = e.detail;
        }
    });

    forwarder.start();
    agent.follow_route(spec.route);
    agent.start();
    sched.run_while([&] { return !done; });
    agent.stop();

    // Drain the uplink, then push the tail of the log to shore. The guard
    // bounds runs where the shore never comes back.
    const Micros guard = sched.now() + netemu::from_seconds(3'600.0);
    sched.run_while([&] { return !up.sender().idle() && sched.now() < guard; });
    forwarder.flush(true);
    forwarder.stop();
    sched.run_while([&] { return !(forwarder.drained() && fwd.sender().idle()) && sched.now() < guard; });
    res.finished_at = sched.now();

    up.sender().close();
    fwd.sender().close();
    sched.run();

    res.events = agent.events();
    res.ingested = log.size();
    res.twin_received = twin.received().size();
    res.forward_retries = forwarder.retained_events();
    std::vector<double> lat;
    for (auto us : log.ingest_latencies_us()) lat.push_back(netemu::to_ms(us));
    if (!lat.empty()) res.ingest_latency_ms = metrics::summarize(std::move(lat));
    res.accounting = sink.close();
    return res;
}

nlohmann::json report_json(const InspectionResult& r) {
    nlohmann::json j;
    j["mode"] = "inspection";
    j["aborted"] = r.aborted ? nlohmann::json(*r.aborted) : nlohmann::json(nullptr);
    auto& ev = j["events"] = nlohmann::json::array();
    for (const auto& e : r.events)
        ev.push_back({{"kind", std::string(robot::to_string(e.kind))},
                      {"at_us", e.at},
                      {"waypoint", e.waypoint},
                      {"detail", e.detail}});
    j["generated"] = r.generated;
    j["ingested"] = r.ingested;
    auto& al = j["alarms"] = nlohmann::json::array();
    for (const auto& a : r.alarms) al.push_back(aggregation::to_json(a));
    j["twin_received"] = r.twin_received;
    j["forward_retries"] = r.forward_retries;
    j["ingest_latency_ms"] = metrics::to_json(r.ingest_latency_ms);
    j["accounting"] = metrics::to_json(r.accounting);
    j["finished_at_us"] = r.finished_at;
    return j;
}

}  // namespace ptxlink::scenario
