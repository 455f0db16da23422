// ptxlink: scenario runner, report comparison and the control-room gateway.
//
// Exit codes: 0 ok, 1 acceptance breach (--check) or replay mismatch,
// 2 configuration error.

#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ptxlink/metrics/metrics.hpp"
#include "ptxlink/scenario/scenario.hpp"
#include "ptxlink/serve/serve.hpp"

using namespace ptxlink;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kBreach = 1;
constexpr int kConfig = 2;

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw netemu::ConfigError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw netemu::ConfigError(path + ": " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw netemu::ConfigError("cannot write " + path);
    out << text;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw netemu::ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("PTXLINK_SEED");
    if (!s || !*s) return std::nullopt;
    try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used);
        if (used != std::string_view(s).size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw netemu::ConfigError(std::string("PTXLINK_SEED is not an unsigned integer: ") + s);
    }
}

// --- run --------------------------------------------------------------------

struct RunOptions {
    std::string mode = "experiment";
    std::optional<std::string> scenario;
    std::optional<std::string> network;
    std::optional<std::string> deployment;
    std::optional<std::size_t> samples;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> config;
    std::optional<std::string> route;
    std::optional<std::string> world;
    std::optional<std::string> rules;
    std::optional<std::size_t> commands;
    std::string out = "report.json";
    std::optional<std::string> trace;
    std::optional<std::string> samples_csv;
    std::optional<std::string> audit_out;
    std::optional<std::string> replay;
    bool check = false;
};

/// One self-contained document per run: everything needed to re-execute it.
/// It becomes the trace header, which is what --replay reads back.
json resolve_spec(const RunOptions& o) {
    json spec = o.config ? read_json_file(*o.config) : json::object();
    if (!spec.is_object()) throw netemu::ConfigError("config must be a JSON object");
    if (spec.contains("topology")) {
        const auto& t = spec.at("topology");
        if (t.contains("preset")) spec["scenario"] = t.at("preset");
        spec.erase("topology");
    }
    if (o.scenario) spec["scenario"] = *o.scenario;
    if (o.network) spec["network"] = *o.network;
    if (o.deployment) spec["deployment"] = *o.deployment;
    if (o.samples) spec["samples"] = *o.samples;
    if (o.seed) spec["seed"] = *o.seed;
    if (o.commands) spec["commands"] = *o.commands;
    if (auto s = env_seed()) spec["seed"] = *s;
    if (o.mode == "experiment" && !spec.contains("seed"))
        throw netemu::ConfigError("experiment mode needs a seed (--seed, config or PTXLINK_SEED)");
    if (o.route) spec["route"] = read_json_file(*o.route);
    if (o.world) spec["world"] = read_json_file(*o.world);
    if (o.rules) spec["rules"] = read_json_file(*o.rules);
    return spec;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    try {
        return j.contains(key) ? j.at(key).get<T>() : fallback;
    } catch (const json::exception& e) {
        throw netemu::ConfigError(std::string(key) + ": " + e.what());
    }
}

scenario::TeleopSpec teleop_spec(const json& j) {
    auto s = scenario::TeleopSpec::defaults();
    s.engine.scenario = get_or<std::string>(j, "scenario", "setup3");
    s.engine.local_network = get_or<std::string>(j, "network", s.engine.local_network);
    s.engine.seed = get_or<std::uint64_t>(j, "seed", s.engine.seed);
    if (j.contains("profiles")) s.engine.profile_overrides = j.at("profiles");
    if (j.contains("operators")) s.engine.registry = jumphost::OperatorRegistry::from_json(j.at("operators"));
    if (j.contains("world")) s.engine.world = robot::World::from_json(j.at("world"));
    if (j.contains("route")) s.engine.route = robot::InspectionRoute::from_json(j.at("route"));
    s.commands = get_or<std::size_t>(j, "commands", s.commands);
    s.rate_hz = get_or<double>(j, "rate_hz", s.rate_hz);
    s.token = get_or<std::string>(j, "token", s.token);
    s.adversarial = get_or<bool>(j, "adversarial", s.adversarial);
    return s;
}

scenario::InspectionSpec inspection_spec(const json& j) {
    scenario::InspectionSpec s;
    s.scenario = get_or<std::string>(j, "scenario", s.scenario);
    s.local_network = get_or<std::string>(j, "network", s.local_network);
    s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
    if (j.contains("profiles")) s.profile_overrides = j.at("profiles");
    s.route = j.contains("route") ? robot::InspectionRoute::from_json(j.at("route")) : scenario::default_route();
    if (j.contains("world")) s.world = robot::World::from_json(j.at("world"));
    if (j.contains("rules")) s.rules = aggregation::rules_from_json(j.at("rules"));
    if (j.contains("shore_outage_s")) {
        const auto& w = j.at("shore_outage_s");
        s.shore_outage = std::pair{netemu::from_seconds(w.at(0).get<double>()), netemu::from_seconds(w.at(1).get<double>())};
    }
    return s;
}

struct RunOutput {
    json report;
    std::string trace;  // JSON-lines, header first
    std::vector<metrics::MetricSample> samples;
    std::vector<jumphost::AuditEntry> audit;
    std::vector<std::string> breaches;
};

std::optional<double> transmission_target_ms(const std::string& network, const std::string& deployment) {
    const auto net = netemu::normalize_name(network);
    const auto dep = netemu::canonical_deployment_name(deployment);
    if (dep == "orchestrated")
        for (const auto& t : netemu::kCalibrationTargets)
            if (t.profile == net) return t.transfer_median_ms;
    if (net == "5g_nsa") {
        if (dep == "function") return 230.0;
        if (dep == "container") return 310.0;
    }
    return std::nullopt;
}

RunOutput execute(const std::string& mode, const json& spec_doc) {
    RunOutput out;
    const json header = {{"mode", mode}, {"spec", spec_doc}};
    if (mode == "experiment") {
        const auto spec = metrics::ExperimentSpec::from_json(spec_doc);
        auto r = metrics::run_experiment(spec);
        out.report = metrics::report_json(r);
        out.trace = netemu::trace_jsonl(json{{"mode", mode}, {"spec", spec.to_json()}}, r.trace.records());
        out.samples = std::move(r.samples);
        if (const auto target = transmission_target_ms(spec.network, spec.deployment)) {
            const double med = r.transmission.median;
            if (std::abs(med / *target - 1.0) > 0.05)
                out.breaches.push_back("transmission median " + std::to_string(med) + " ms outside ±5% of " +
                                       std::to_string(*target) + " ms");
        }
        if (r.accounting.sent > 0 && std::abs(r.per + r.pdr - 1.0) > 1e-12) out.breaches.push_back("PER + PDR != 1");
    } else if (mode == "teleop") {
        auto r = scenario::run_teleop(teleop_spec(spec_doc));
        out.report = scenario::report_json(r);
        out.trace = netemu::trace_jsonl(header, r.trace.records());
        out.audit = r.audit;
        if (r.rtt_ms.empty()) {
            out.breaches.push_back("no command was acknowledged");
        } else {
            const double mean = metrics::summarize(r.rtt_ms).mean;
            if (mean < 70.0 || mean > 130.0)
                out.breaches.push_back("command→ack mean " + std::to_string(mean) + " ms outside [70, 130]");
        }
        if (!r.bypass.ok()) out.breaches.push_back("zero-bypass violated");
        if (!r.audit_verdict.intact) out.breaches.push_back("audit chain broken");
    } else if (mode == "inspection") {
        auto r = scenario::run_inspection(inspection_spec(spec_doc));
        out.report = scenario::report_json(r);
        out.trace = netemu::trace_jsonl(header, r.trace.records());
        if (r.aborted) out.breaches.push_back("route aborted: " + *r.aborted);
        if (r.twin_received != r.ingested) out.breaches.push_back("twin did not receive every ingested record");
    } else {
        throw netemu::ConfigError("unknown mode '" + mode + "' (experiment, teleop, inspection)");
    }
    return out;
}

int cmd_replay(const std::string& path) {
    const auto recorded = read_text(path);
    std::istringstream in(recorded);
    std::string first;
    std::getline(in, first);
    const json head = json::parse(first, nullptr, false);
    if (!head.is_object() || !head.contains("header"))
        throw netemu::ConfigError(path + ": missing header line");
    const auto& h = head.at("header");
    const auto mode = h.value("mode", std::string("experiment"));
    const auto again = execute(mode, h.at("spec"));
    if (again.trace == recorded) {
        std::cout << "replay: identical (" << recorded.size() << " bytes)\n";
        return kOk;
    }
    std::istringstream a(recorded), b(again.trace);
    std::string la, lb;
    std::size_t line = 0;
    while (true) {
        ++line;
        const bool ga = static_cast<bool>(std::getline(a, la));
        const bool gb = static_cast<bool>(std::getline(b, lb));
        if (!ga || !gb || la != lb) break;
    }
    std::cout << "replay: MISMATCH at line " << line << "\n";
    return kBreach;
}

int cmd_run(const RunOptions& o) {
    if (o.replay) return cmd_replay(*o.replay);
    const auto spec = resolve_spec(o);
    const auto res = execute(o.mode, spec);
    write_text(o.out, res.report.dump(2) + "\n");
    if (o.trace) write_text(*o.trace, res.trace);
    if (o.samples_csv) {
        std::ofstream csv(*o.samples_csv);
        if (!csv) throw netemu::ConfigError("cannot write " + *o.samples_csv);
        metrics::write_samples_csv(csv, res.samples);
    }
    if (o.audit_out) {
        std::ofstream a(*o.audit_out);
        if (!a) throw netemu::ConfigError("cannot write " + *o.audit_out);
        jumphost::write_audit_jsonl(a, res.audit);
    }
    std::cout << "wrote " << o.out << "\n";
    if (o.check) {
        for (const auto& b : res.breaches) std::cerr << "check: FAIL " << b << "\n";
        if (!res.breaches.empty()) return kBreach;
        std::cerr << "check: PASS\n";
    }
    return kOk;
}

// --- compare ----------------------------------------------------------------

int cmd_compare(const std::string& a_path, const std::string& b_path, const std::optional<std::string>& out) {
    const auto a = read_json_file(a_path);
    const auto b = read_json_file(b_path);
    const auto diff = metrics::compare_reports(a, b);
    std::cout << "a = " << diff.at("a").get<std::string>() << ", b = " << diff.at("b").get<std::string>() << "\n";
    std::cout << std::left << std::setw(26) << "metric" << std::right << std::setw(12) << "median_a" << std::setw(12)
              << "median_b" << std::setw(12) << "delta" << std::setw(10) << "a/b" << "\n";
    std::cout << std::fixed << std::setprecision(3);
    for (const auto& [metric, m] : diff.at("metrics").items()) {
        std::cout << std::left << std::setw(26) << metric << std::right << std::setw(12)
                  << m.at("median_a").get<double>() << std::setw(12) << m.at("median_b").get<double>()
                  << std::setw(12) << m.at("delta_median").get<double>() << std::setw(10);
        if (m.at("median_ratio").is_null())
            std::cout << "-";
        else
            std::cout << m.at("median_ratio").get<double>();
        std::cout << "\n";
    }
    std::cout << "delta_per " << diff.at("delta_per").get<double>() << "  delta_pdr " << diff.at("delta_pdr").get<double>()
              << "\n";
    if (out) write_text(*out, diff.dump(2) + "\n");
    return kOk;
}

// --- serve ------------------------------------------------------------------

std::atomic<bool> g_interrupted{false};

int cmd_serve(const std::string& host, std::uint16_t port, const std::optional<std::string>& config,
              const std::optional<std::string>& operators, const std::optional<std::string>& rules,
              const std::optional<std::string>& report, double duration_s) {
    serve::ServeConfig cfg;
    cfg.host = host;
    cfg.port = port;
    const json doc = config ? read_json_file(*config) : json::object();
    auto t = teleop_spec(doc);
    cfg.engine = t.engine;
    if (env_seed()) cfg.engine.seed = *env_seed();
    if (operators) cfg.engine.registry = jumphost::OperatorRegistry::load(*operators);
    if (rules) cfg.rules = aggregation::load_rules(*rules);
    cfg.report_path = report;

    serve::OpsServer server(std::move(cfg));
    const auto bound = server.start();
    std::cout << "serving ws://" << host << ":" << bound << "/ops (schema at http://" << host << ":" << bound
              << "/schema)" << std::endl;
    std::signal(SIGINT, [](int) { g_interrupted = true; });
    std::signal(SIGTERM, [](int) { g_interrupted = true; });
    const auto t0 = std::chrono::steady_clock::now();
    while (!g_interrupted) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        if (duration_s > 0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= duration_s)
            break;
    }
    server.stop();
    std::cout << server.report().dump(2) << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Offshore PtX communication testbed"};
    app.require_subcommand(1);

    RunOptions ro;
    auto* run = app.add_subcommand("run", "Run an experiment, teleop or inspection scenario, or replay a trace");
    run->add_option("--mode", ro.mode, "experiment | teleop | inspection")->capture_default_str();
    run->add_option("--scenario", ro.scenario, "Topology preset (setup1..setup4)");
    run->add_option("--network", ro.network, "Local network profile (lte, 5g_nsa, 5g_sa, ...)");
    run->add_option("--deployment", ro.deployment, "function | container | orchestrated (docker, kubernetes)");
    run->add_option("--samples", ro.samples, "Transfers per experiment");
    run->add_option("--seed", ro.seed, "Scenario seed (PTXLINK_SEED overrides)");
    run->add_option("--config", ro.config, "JSON config {profiles, deployments, topology, ...}");
    run->add_option("--route", ro.route, "Inspection route file");
    run->add_option("--world", ro.world, "World (obstacles, hotspots) file");
    run->add_option("--rules", ro.rules, "Anomaly rules file");
    run->add_option("--commands", ro.commands, "Teleop commands to send");
    run->add_option("--out", ro.out, "Report path")->capture_default_str();
    run->add_option("--trace", ro.trace, "Trace (JSON-lines) path");
    run->add_option("--samples-csv", ro.samples_csv, "Per-sample CSV path");
    run->add_option("--audit-out", ro.audit_out, "Audit export (JSON-lines, teleop)");
    run->add_option("--replay", ro.replay, "Re-execute a recorded trace and compare byte for byte");
    run->add_flag("--check", ro.check, "Exit 1 when an acceptance threshold is breached");

    std::string cmp_a, cmp_b;
    std::optional<std::string> cmp_out;
    auto* compare = app.add_subcommand("compare", "Per-metric deltas and median ratios of two reports");
    compare->add_option("report_a", cmp_a)->required();
    compare->add_option("report_b", cmp_b)->required();
    compare->add_option("--out", cmp_out, "Write the diff as JSON");

    std::string host = "127.0.0.1";
    std::uint16_t port = 8765;
    std::optional<std::string> serve_config, serve_ops, serve_rules, serve_report;
    double duration = 0.0;
    auto* srv = app.add_subcommand("serve", "Control-room gateway: ws://host:port/ops, GET /schema");
    srv->add_option("--host", host)->capture_default_str();
    srv->add_option("--port", port)->capture_default_str();
    srv->add_option("--config", serve_config, "JSON config {scenario, network, seed, profiles, operators, world}");
    srv->add_option("--operators", serve_ops, "Operator registry file");
    srv->add_option("--rules", serve_rules, "Anomaly rules file");
    srv->add_option("--report", serve_report, "Write the session report here on shutdown");
    srv->add_option("--duration", duration, "Stop after this many seconds (0 = until interrupted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*run) return cmd_run(ro);
        if (*compare) return cmd_compare(cmp_a, cmp_b, cmp_out);
        if (*srv) return cmd_serve(host, port, serve_config, serve_ops, serve_rules, serve_report, duration);
    } catch (const netemu::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const metrics::IncompatibleReports& e) {
        std::cerr << "incompatible reports: " << e.what() << "\n";
        return kConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    }
    return kOk;
}
