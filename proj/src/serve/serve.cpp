#include "ptxlink/serve/serve.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast.hpp>

#include "ptxlink/metrics/metrics.hpp"

namespace ptxlink::serve {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

using ConnId = std::uint64_t;
using netemu::Micros;

namespace {

json object_schema(const std::string& type, json properties, json required) {
    properties["type"] = {{"const", type}};
    required.push_back("type");
    return {{"type", "object"}, {"properties", std::move(properties)}, {"required", std::move(required)}};
}

}  // namespace

json ops_schema() {
    const json num = {{"type", "number"}};
    const json str = {{"type", "string"}};
    const json integer = {{"type", "integer"}};
    const json gait = {{"enum", {"idle", "walk", "run", "stairs"}}};
    json s;
    s["endpoint"] = "/ops";
    s["client_to_server"] = {
        {"auth", object_schema("auth", {{"token", str}}, {"token"})},
        {"cmd", object_schema("cmd",
                              {{"gait", gait},
                               {"vx", num},
                               {"vy", num},
                               {"yaw_rate", num},
                               {"duration_ms", integer},
                               {"client_ts", num}},
                              {"gait", "vx", "vy", "yaw_rate"})},
    };
    s["server_to_client"] = {
        {"auth", object_schema("auth",
                               {{"ok", {{"type", "boolean"}}},
                                {"session", str},
                                {"expires_at_us", integer},
                                {"allowed_ops", {{"type", "array"}, {"items", str}}},
                                {"error", str}},
                               {"ok"})},
        {"cmd", object_schema("cmd",
                              {{"command_id", integer},
                               {"status", {{"enum", {"accepted", "rejected", "invalid", "unauthenticated"}}}},
                               {"reason", str},
                               {"client_ts", num}},
                              {"status"})},
        {"metric", object_schema("metric",
                                 {{"name", {{"const", "rtt_ms"}}},
                                  {"value", num},
                                  {"command_id", integer},
                                  {"client_ts", num}},
                                 {"name", "value", "command_id"})},
        {"telemetry", object_schema("telemetry",
                                    {{"source", str},
                                     {"kind", str},
                                     {"timestamp_us", integer},
                                     {"data", {{"type", "object"}}}},
                                    {"source", "kind", "timestamp_us"})},
        {"alarm", object_schema("alarm",
                                {{"rule_id", str}, {"source", str}, {"trigger_us", integer}, {"observed", num}},
                                {"rule_id", "source", "trigger_us", "observed"})},
    };
    return s;
}

// --- I/O side ---------------------------------------------------------------

struct OpsServer::Impl {
    struct Inbound {
        ConnId conn;
        bool closed;
        std::string text;
    };

    class WsSession;
    class HttpSession;

    explicit Impl(ServeConfig c) : config(std::move(c)) {}

    ServeConfig config;
    net::io_context ioc;
    std::optional<tcp::acceptor> acceptor;
    std::thread io_thread;
    std::thread engine_thread;

    // Engine inbox: the only structure both sides touch.
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Inbound> inbox;
    bool stopping = false;

    // I/O-thread only.
    std::map<ConnId, std::weak_ptr<WsSession>> sessions;
    ConnId next_conn = 1;

    // Engine-thread only until joined.
    json final_report;
    bool started = false;
    bool stopped = false;

    void post_inbound(Inbound in) {
        {
            std::lock_guard lock(mu);
            inbox.push_back(std::move(in));
        }
        cv.notify_one();
    }
    void send_to(ConnId conn, std::string text);
    void accept();
    void engine_main();
};

class OpsServer::Impl::WsSession : public std::enable_shared_from_this<WsSession> {
public:
    WsSession(Impl& server, beast::tcp_stream stream, ConnId id) : server_(server), ws_(std::move(stream)), id_(id) {}

    void run(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
            if (ec) return;
            self->server_.sessions[self->id_] = self;
            self->read();
        });
    }

    void send(std::string text) {
        out_.push_back(std::move(text));
        if (out_.size() == 1) write();
    }

private:
    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->server_.sessions.erase(self->id_);
                self->server_.post_inbound({self->id_, true, {}});
                return;
            }
            self->server_.post_inbound({self->id_, false, beast::buffers_to_string(self->buffer_.data())});
            self->buffer_.consume(self->buffer_.size());
            self->read();
        });
    }

    void write() {
        ws_.text(true);
        ws_.async_write(net::buffer(out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return;
            self->out_.pop_front();
            if (!self->out_.empty()) self->write();
        });
    }

    Impl& server_;
    websocket::stream<beast::tcp_stream> ws_;
    ConnId id_;
    beast::flat_buffer buffer_;
    std::deque<std::string> out_;
};

class OpsServer::Impl::HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(Impl& server, tcp::socket socket) : server_(server), stream_(std::move(socket)) {}

    void run() {
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (!ec) self->dispatch();
        });
    }

private:
    void dispatch() {
        if (websocket::is_upgrade(req_)) {
            if (req_.target() == "/ops") {
                stream_.expires_never();
                std::make_shared<WsSession>(server_, std::move(stream_), server_.next_conn++)->run(std::move(req_));
                return;
            }
        }
        auto res = std::make_shared<http::response<http::string_body>>();
        res->version(req_.version());
        res->keep_alive(false);
        if (req_.method() == http::verb::get && req_.target() == "/schema") {
            res->result(http::status::ok);
            res->set(http::field::content_type, "application/json");
            res->body() = ops_schema().dump(2);
        } else {
            res->result(http::status::not_found);
            res->set(http::field::content_type, "text/plain");
            res->body() = "not found\n";
        }
        res->prepare_payload();
        http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
            beast::error_code ignored;
            self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        });
    }

    Impl& server_;
    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> req_;
};

void OpsServer::Impl::send_to(ConnId conn, std::string text) {
    net::post(ioc, [this, conn, text = std::move(text)]() mutable {
        auto it = sessions.find(conn);
        if (it == sessions.end()) return;
        if (auto s = it->second.lock()) s->send(std::move(text));
    });
}

void OpsServer::Impl::accept() {
    acceptor->async_accept(ioc, [this](beast::error_code ec, tcp::socket socket) {
        if (ec) return;
        std::make_shared<HttpSession>(*this, std::move(socket))->run();
        accept();
    });
}

// --- engine side ------------------------------------------------------------

namespace {

json ops_names(protocol::OpMask mask) {
    json out = json::array();
    for (auto t : {protocol::MsgType::telemetry, protocol::MsgType::command, protocol::MsgType::ack,
                   protocol::MsgType::auth, protocol::MsgType::metric})
        if (mask & protocol::op_bit(t)) out.push_back(std::string(protocol::to_string(t)));
    return out;
}

}  // namespace

void OpsServer::Impl::engine_main() {
    using Clock = std::chrono::steady_clock;
    auto engine_cfg = config.engine;
    // The operator view refreshes at >= 10 Hz.
    engine_cfg.robot.pose_period_us = std::min<netemu::Micros>(engine_cfg.robot.pose_period_us, 100'000);
    scenario::TeleopEngine engine(std::move(engine_cfg));
    auto& sched = engine.scheduler();
    aggregation::TelemetryLog log;
    aggregation::RuleEngine rules(config.rules);
    std::map<ConnId, scenario::TeleopEngine::ConsoleId> consoles;
    std::map<ConnId, bool> authed;
    std::vector<double> rtt;

    auto broadcast = [&](const json& msg) {
        const auto text = msg.dump();
        for (const auto& [conn, ok] : authed)
            if (ok) send_to(conn, text);
    };
    engine.robot().on_telemetry([&](protocol::TelemetryRecord rec) {
        json m = {{"type", "telemetry"},
                  {"source", rec.source},
                  {"kind", std::string(protocol::to_string(rec.kind))},
                  {"timestamp_us", rec.timestamp_us}};
        if (rec.kind != protocol::TelemetryKind::image) m["data"] = json::parse(rec.payload, nullptr, false);
        for (const auto& a : rules.evaluate(rec)) {
            json al = aggregation::to_json(a);
            al["type"] = "alarm";
            broadcast(al);
        }
        log.ingest(std::move(rec), sched.now());
        broadcast(m);
    });

    auto handle = [&](const Inbound& in) {
        if (in.closed) {
            consoles.erase(in.conn);
            authed.erase(in.conn);
            return;
        }
        const json msg = json::parse(in.text, nullptr, false);
        const std::string type = msg.is_object() ? msg.value("type", "") : "";
        if (type == "auth") {
            const std::string token = msg.value("token", "");
            const ConnId conn = in.conn;
            consoles[conn] = engine.open_console(token, [&, conn](const scenario::TeleopEngine::AuthResult& a) {
                authed[conn] = a.ok;
                json r = {{"type", "auth"}, {"ok", a.ok}};
                if (a.ok) {
                    r["session"] = jumphost::session_label(a.session);
                    r["expires_at_us"] = a.expires_at_us;
                    r["allowed_ops"] = ops_names(a.allowed_ops);
                } else {
                    r["error"] = "authentication rejected";
                }
                send_to(conn, r.dump());
            });
        } else if (type == "cmd") {
            const json client_ts = msg.value("client_ts", json(nullptr));
            auto it = consoles.find(in.conn);
            if (it == consoles.end() || !authed[in.conn]) {
                send_to(in.conn, json{{"type", "cmd"}, {"status", "unauthenticated"}, {"client_ts", client_ts}}.dump());
                return;
            }
            protocol::CommandMessage cmd;
            try {
                cmd.gait = protocol::gait_from_string(msg.at("gait").get<std::string>());
                cmd.vx = msg.at("vx").get<double>();
                cmd.vy = msg.at("vy").get<double>();
                cmd.yaw_rate = msg.at("yaw_rate").get<double>();
                cmd.duration_ms = msg.value("duration_ms", 100u);
                protocol::validate(cmd, config.engine.jump_host.caps);
            } catch (const std::exception& e) {
                send_to(in.conn, json{{"type", "cmd"}, {"status", "invalid"}, {"reason", e.what()},
                                      {"client_ts", client_ts}}
                                     .dump());
                return;
            }
            const ConnId conn = in.conn;
            engine.send_command(it->second, cmd, [&, conn, client_ts](const scenario::TeleopEngine::Reply& r) {
                const bool ok = r.reply.status == protocol::ReplyStatus::accepted;
                send_to(conn, json{{"type", "cmd"},
                                   {"command_id", r.reply.command_id},
                                   {"status", ok ? "accepted" : "rejected"},
                                   {"reason", r.reply.reason},
                                   {"client_ts", client_ts}}
                                  .dump());
                if (!ok) return;
                // Round trip measured at the gateway, echoed to the client.
                rtt.push_back(r.rtt_ms());
                send_to(conn, json{{"type", "metric"},
                                   {"name", "rtt_ms"},
                                   {"value", r.rtt_ms()},
                                   {"command_id", r.reply.command_id},
                                   {"client_ts", client_ts}}
                                  .dump());
            });
        } else {
            std::cerr << "serve: ignoring message of type '" << type << "'\n";
        }
    };

    const auto t0 = Clock::now();
    auto elapsed_us = [&] {
        return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0).count();
    };
    for (;;) {
        std::deque<Inbound> batch;
        {
            std::unique_lock lock(mu);
            Micros wait_us = 5'000;
            if (auto next = sched.next_event_time()) wait_us = std::clamp<Micros>(*next - elapsed_us(), Micros{0}, Micros{5'000});
            cv.wait_for(lock, std::chrono::microseconds(wait_us), [&] { return stopping || !inbox.empty(); });
            if (stopping) break;
            batch.swap(inbox);
        }
        sched.run_until(std::max(sched.now(), Micros(elapsed_us())));
        for (const auto& in : batch) handle(in);
    }

    json rep;
    rep["mode"] = "serve";
    rep["rtt_ms"] = rtt.empty() ? json(nullptr) : metrics::to_json(metrics::summarize(rtt));
    rep["commands_applied"] = engine.robot().commands_applied();
    rep["telemetry_ingested"] = log.size();
    const auto& audit = engine.jump_host().audit().entries();
    rep["audit_entries"] = audit.size();
    rep["audit_intact"] = jumphost::verify_audit(audit).intact;
    const auto bypass = jumphost::check_zero_bypass(audit, engine.receipts());
    rep["bypass"] = {{"ok", bypass.ok()}, {"matched", bypass.matched}, {"violations", bypass.violations}};
    final_report = std::move(rep);
}

// --- lifecycle --------------------------------------------------------------

OpsServer::OpsServer(ServeConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

OpsServer::~OpsServer() { stop(); }

std::uint16_t OpsServer::start() {
    auto& m = *impl_;
    if (m.started) return m.acceptor->local_endpoint().port();
    const tcp::endpoint ep(net::ip::make_address(m.config.host), m.config.port);
    m.acceptor.emplace(m.ioc);
    m.acceptor->open(ep.protocol());
    m.acceptor->set_option(net::socket_base::reuse_address(true));
    m.acceptor->bind(ep);
    m.acceptor->listen();
    const auto port = m.acceptor->local_endpoint().port();
    m.accept();
    m.started = true;
    m.engine_thread = std::thread([&m] { m.engine_main(); });
    m.io_thread = std::thread([&m] {
        auto guard = net::make_work_guard(m.ioc);
        m.ioc.run();
    });
    return port;
}

void OpsServer::stop() {
    auto& m = *impl_;
    if (!m.started || m.stopped) return;
    m.stopped = true;
    {
        std::lock_guard lock(m.mu);
        m.stopping = true;
    }
    m.cv.notify_one();
    m.engine_thread.join();
    m.ioc.stop();
    m.io_thread.join();
    if (m.config.report_path) {
        std::ofstream out(*m.config.report_path);
        out << m.final_report.dump(2) << '\n';
    }
}

const json& OpsServer::report() const noexcept { return impl_->final_report; }

}  // namespace ptxlink::serve
