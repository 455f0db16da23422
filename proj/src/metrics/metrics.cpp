#include "ptxlink/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <numeric>
#include <ostream>

#include "ptxlink/netemu/topology.hpp"

namespace ptxlink::metrics {

using netemu::ConfigError;
using nlohmann::json;

// --- summaries --------------------------------------------------------------

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw EmptyInput();
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

BoxStats summarize(std::vector<double> samples) {
    if (samples.empty()) throw EmptyInput();
    std::sort(samples.begin(), samples.end());
    BoxStats b;
    b.n = samples.size();
    b.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(b.n);
    b.q1 = quantile_sorted(samples, 0.25);
    b.median = quantile_sorted(samples, 0.5);
    b.q3 = quantile_sorted(samples, 0.75);
    b.iqr = b.q3 - b.q1;
    const double lo = b.q1 - 1.5 * b.iqr;
    const double hi = b.q3 + 1.5 * b.iqr;
    b.whisker_low = *std::find_if(samples.begin(), samples.end(), [lo](double v) { return v >= lo; });
    b.whisker_high = *std::find_if(samples.rbegin(), samples.rend(), [hi](double v) { return v <= hi; });
    for (const double v : samples) {
        if (v < lo || v > hi) b.outliers.push_back(v);
    }
    return b;
}

json to_json(const BoxStats& b) {
    return {{"n", b.n},           {"mean", b.mean},
            {"median", b.median}, {"q1", b.q1},
            {"q3", b.q3},         {"iqr", b.iqr},
            {"whisker_low", b.whisker_low}, {"whisker_high", b.whisker_high},
            {"outliers", b.outliers}};
}

// --- accounting -------------------------------------------------------------

double compute_per(const PacketAccounting& a) {
    if (a.sent == 0) throw EmptyRun();
    return static_cast<double>(a.received_corrupted + a.missing) / static_cast<double>(a.sent);
}

double compute_pdr(const PacketAccounting& a) {
    if (a.sent == 0) throw EmptyRun();
    return static_cast<double>(a.received_correct) / static_cast<double>(a.sent);
}

json to_json(const PacketAccounting& a) {
    return {{"sent", a.sent},
            {"received_correct", a.received_correct},
            {"received_corrupted", a.received_corrupted},
            {"missing", a.missing}};
}

void AccountingSink::record(protocol::AttemptStatus status) {
    switch (status) {
        case protocol::AttemptStatus::in_flight: ++acct_.sent; break;
        case protocol::AttemptStatus::acked: ++acct_.received_correct; break;
        case protocol::AttemptStatus::corrupted: ++acct_.received_corrupted; break;
        case protocol::AttemptStatus::lost: ++acct_.missing; break;
    }
}

void AccountingSink::attach(protocol::ArqChannel& channel) {
    channel.observe_attempts([this](protocol::AttemptStatus s) { record(s); });
}

const PacketAccounting& AccountingSink::close() {
    const auto resolved = acct_.received_correct + acct_.received_corrupted + acct_.missing;
    if (acct_.sent > resolved) acct_.missing += acct_.sent - resolved;
    return acct_;
}

PacketAccounting recount(std::span<const netemu::TraceRecord> trace, std::optional<Micros> closed_at) {
    PacketAccounting a;
    for (const auto& r : trace) {
        if (r.attempt == 0) continue;  // transport acknowledgement
        ++a.sent;
        const bool arrived =
            r.outcome.deliver_time && (!closed_at || *r.outcome.deliver_time <= *closed_at);
        if (!arrived || r.outcome.status == netemu::DeliveryStatus::lost) {
            ++a.missing;
        } else if (r.outcome.status == netemu::DeliveryStatus::corrupted) {
            ++a.received_corrupted;
        } else {
            ++a.received_correct;
        }
    }
    return a;
}

// --- samples ----------------------------------------------------------------

std::string_view to_string(MetricKind k) {
    switch (k) {
        case MetricKind::transmission_latency_ms: return "transmission_latency_ms";
        case MetricKind::processing_ms: return "processing_ms";
        case MetricKind::rtt_ms: return "rtt_ms";
    }
    return "unknown";
}

void write_samples_csv(std::ostream& out, std::span<const MetricSample> samples) {
    out << "run,kind,network,deployment,payload_bytes,value_ms\n";
    for (const auto& s : samples) {
        out << s.run << ',' << to_string(s.kind) << ',' << s.network << ',' << s.deployment << ',' << s.payload_bytes
            << ',' << json(s.value_ms).dump() << '\n';
    }
}

// --- spec -------------------------------------------------------------------

void ExperimentSpec::validate() const {
    if (n == 0) throw ConfigError("experiment needs n >= 1");
    if (mtu_payload == 0) throw ConfigError("mtu_payload must be positive");
    if (request_window == 0) throw ConfigError("request_window must be positive");
    if (client == server) throw ConfigError("client and server must differ");
    payload.validate();
}

namespace {

json arq_to_json(const protocol::ArqConfig& c) {
    return {{"window", c.window},
            {"timeout_us", c.timeout_us},
            {"max_retries", c.max_retries},
            {"rtt_alpha", c.rtt_alpha},
            {"timeout_factor", c.timeout_factor},
            {"initial_rtt_us", c.initial_rtt_us},
            {"min_timeout_us", c.min_timeout_us}};
}

protocol::ArqConfig arq_from_json(const json& j) {
    protocol::ArqConfig c;
    c.window = j.value("window", c.window);
    c.timeout_us = j.value("timeout_us", c.timeout_us);
    if (j.contains("timeout_ms")) c.timeout_us = netemu::from_ms(j.at("timeout_ms").get<double>());
    c.max_retries = j.value("max_retries", c.max_retries);
    c.rtt_alpha = j.value("rtt_alpha", c.rtt_alpha);
    c.timeout_factor = j.value("timeout_factor", c.timeout_factor);
    c.initial_rtt_us = j.value("initial_rtt_us", c.initial_rtt_us);
    c.min_timeout_us = j.value("min_timeout_us", c.min_timeout_us);
    return c;
}

}  // namespace

json ExperimentSpec::to_json() const {
    return {{"scenario", scenario},
            {"network", network},
            {"deployment", deployment},
            {"n", n},
            {"payload", {{"mean_bytes", payload.mean_bytes}, {"sigma_ratio", payload.sigma_ratio}, {"min_bytes", payload.min_bytes}}},
            {"seed", seed},
            {"client", client},
            {"server", server},
            {"mtu_payload", mtu_payload},
            {"response_bytes", response_bytes},
            {"request_window", request_window},
            {"arq", arq_to_json(arq)},
            {"profiles", profile_overrides},
            {"deployments", deployment_overrides}};
}

ExperimentSpec ExperimentSpec::from_json(const json& j) {
    ExperimentSpec s;
    try {
        s.scenario = j.value("scenario", s.scenario);
        s.network = j.value("network", s.network);
        s.deployment = j.value("deployment", s.deployment);
        s.n = j.contains("samples") ? j.at("samples").get<std::size_t>() : j.value("n", s.n);
        s.seed = j.value("seed", s.seed);
        if (j.contains("payload")) {
            const auto& p = j.at("payload");
            s.payload.mean_bytes = p.value("mean_bytes", s.payload.mean_bytes);
            s.payload.sigma_ratio = p.value("sigma_ratio", s.payload.sigma_ratio);
            s.payload.min_bytes = p.value("min_bytes", s.payload.min_bytes);
        }
        s.client = j.value("client", s.client);
        s.server = j.value("server", s.server);
        s.mtu_payload = j.value("mtu_payload", s.mtu_payload);
        s.response_bytes = j.value("response_bytes", s.response_bytes);
        s.request_window = j.value("request_window", s.request_window);
        if (j.contains("arq")) s.arq = arq_from_json(j.at("arq"));
        if (j.contains("profiles")) s.profile_overrides = j.at("profiles");
        if (j.contains("deployments")) s.deployment_overrides = j.at("deployments");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment spec: ") + e.what());
    }
    return s;
}

// --- transfers --------------------------------------------------------------

std::optional<TransferSample> measure_transfer(netemu::Scheduler& sched, protocol::ArqChannel& request,
                                               protocol::ArqChannel& response, std::size_t payload_bytes,
                                               const netemu::DeploymentProfile& deployment, netemu::Rng& rng,
                                               std::size_t mtu_payload, std::size_t response_bytes) {
    const Micros t0 = sched.now();
    const std::size_t chunks = std::max<std::size_t>(1, (payload_bytes + mtu_payload - 1) / mtu_payload);
    std::size_t got = 0;
    bool failed = false;
    std::optional<Micros> done_at;
    Micros processing_us = 0;

    auto on_done = [&failed](const protocol::SendResult& r) {
        if (!r.delivered) failed = true;
    };
    request.on_deliver([&](const protocol::Frame&) {
        if (++got != chunks) return;
        processing_us = netemu::from_ms(netemu::sample_processing(deployment, rng));
        sched.schedule_after(processing_us, [&] {
            if (!failed) response.send_reliable(protocol::MsgType::telemetry, protocol::Bytes(response_bytes), on_done);
        }, "server-respond");
    });
    response.on_deliver([&](const protocol::Frame&) { done_at = sched.now(); });

    request.sender().cork();
    for (std::size_t k = 0; k < chunks; ++k) {
        const std::size_t len = std::min(mtu_payload, payload_bytes - std::min(payload_bytes, k * mtu_payload));
        request.send_reliable(protocol::MsgType::telemetry, protocol::Bytes(std::max<std::size_t>(len, 1)), on_done);
    }
    request.sender().uncork();

    sched.run_while([&] { return !done_at && !failed; });
    // Nothing is retransmitted past this point; in-flight frames still land.
    request.sender().close();
    response.sender().close();
    sched.run();
    request.on_deliver({});
    response.on_deliver({});

    if (!done_at) return std::nullopt;
    TransferSample s;
    s.rtt_ms = netemu::to_ms(*done_at - t0);
    s.processing_ms = netemu::to_ms(processing_us);
    s.transmission_ms = netemu::to_ms(*done_at - t0 - processing_us);
    return s;
}

ExperimentResult run_experiment(const ExperimentSpec& input) {
    ExperimentResult res;
    res.spec = input;
    auto& spec = res.spec;
    spec.validate();
    spec.network = netemu::normalize_name(spec.network);
    spec.deployment = netemu::canonical_deployment_name(spec.deployment);
    spec.scenario = std::string(netemu::to_string(netemu::setup_from_string(spec.scenario)));

    auto profiles = netemu::ProfileSet::builtin();
    if (!spec.profile_overrides.empty()) profiles.merge_json(spec.profile_overrides);
    auto deployments = netemu::DeploymentSet::builtin();
    if (!spec.deployment_overrides.empty()) deployments.merge_json(spec.deployment_overrides);
    const auto deployment = deployments.at(spec.deployment);
    profiles.at(spec.network);  // unknown network is a config error

    netemu::TopologyOptions opts;
    opts.local_network = spec.network;
    const auto topo = netemu::build_topology(spec.scenario, profiles, opts);
    const auto route = topo.route(spec.client, spec.server);
    if (!route) throw ConfigError("no route from " + spec.client + " to " + spec.server);

    std::deque<netemu::Link> links;
    std::vector<netemu::Link*> fwd;
    std::vector<netemu::Link*> rev;
    for (const auto& hop : *route) {
        auto p = hop.link->profile.scaled(deployment.transfer_scale);
        const std::string domain = p.jitter_seed_domain.empty() ? p.name : p.jitter_seed_domain;
        p.jitter_seed_domain = domain + "/" + hop.from + ">" + hop.to;
        fwd.push_back(&links.emplace_back(p, spec.seed));
        p.jitter_seed_domain = domain + "/" + hop.to + ">" + hop.from;
        rev.insert(rev.begin(), &links.emplace_back(p, spec.seed));
    }

    netemu::Scheduler sched;
    auto payload_rng = netemu::make_stream(spec.seed, "payload");
    auto processing_rng = netemu::make_stream(spec.seed, "processing");
    AccountingSink sink;
    std::vector<double> transmission;
    std::vector<double> processing;

    protocol::ArqConfig req_cfg = spec.arq;
    req_cfg.window = spec.request_window;
    for (std::size_t i = 0; i < spec.n; ++i) {
        const std::size_t size = spec.payload.sample(payload_rng);
        protocol::ArqChannel req(sched, netemu::LinkPath(fwd), netemu::LinkPath(rev), req_cfg, "req", {}, &res.trace);
        protocol::ArqChannel rsp(sched, netemu::LinkPath(rev), netemu::LinkPath(fwd), spec.arq, "rsp", {}, &res.trace);
        sink.attach(req);
        sink.attach(rsp);
        const auto s = measure_transfer(sched, req, rsp, size, deployment, processing_rng, spec.mtu_payload,
                                        spec.response_bytes);
        if (!s) {
            ++res.dropped;
            continue;
        }
        transmission.push_back(s->transmission_ms);
        processing.push_back(s->processing_ms);
        for (const auto& [kind, v] : {std::pair{MetricKind::transmission_latency_ms, s->transmission_ms},
                                      std::pair{MetricKind::processing_ms, s->processing_ms},
                                      std::pair{MetricKind::rtt_ms, s->rtt_ms}}) {
            res.samples.push_back({kind, v, i, spec.network, spec.deployment, size});
        }
    }

    res.closed_at = sched.now();
    res.accounting = sink.close();
    res.per = compute_per(res.accounting);
    res.pdr = compute_pdr(res.accounting);
    if (!transmission.empty()) {
        res.transmission = summarize(std::move(transmission));
        res.processing = summarize(std::move(processing));
    }
    return res;
}

json report_json(const ExperimentResult& r, const std::string& samples_path) {
    std::vector<double> rtts;
    for (const auto& s : r.samples) {
        if (s.kind == MetricKind::rtt_ms) rtts.push_back(s.value_ms);
    }
    json box = {{"transmission_latency_ms", to_json(r.transmission)}, {"processing_ms", to_json(r.processing)}};
    if (!rtts.empty()) box["rtt_ms"] = to_json(summarize(std::move(rtts)));
    return {{"spec", r.spec.to_json()},
            {"box_stats", box},
            {"accounting", to_json(r.accounting)},
            {"per", r.per},
            {"pdr", r.pdr},
            {"dropped", r.dropped},
            {"samples_path", samples_path}};
}

json compare_reports(const json& a, const json& b) {
    try {
        if (a.at("spec").at("payload") != b.at("spec").at("payload"))
            throw IncompatibleReports("reports use different payload models");
        auto label = [](const json& r) {
            return r.at("spec").at("network").get<std::string>() + "/" + r.at("spec").at("deployment").get<std::string>();
        };
        json out = {{"a", label(a)}, {"b", label(b)}, {"metrics", json::object()}};
        for (const auto& [metric, sa] : a.at("box_stats").items()) {
            if (!b.at("box_stats").contains(metric)) continue;
            const auto& sb = b.at("box_stats").at(metric);
            json m;
            for (const char* k : {"median", "mean", "q1", "q3", "iqr"}) {
                m[std::string("delta_") + k] = sb.at(k).get<double>() - sa.at(k).get<double>();
            }
            const double mb = sb.at("median").get<double>();
            m["median_a"] = sa.at("median");
            m["median_b"] = sb.at("median");
            m["median_ratio"] = mb != 0.0 ? json(sa.at("median").get<double>() / mb) : json(nullptr);
            out["metrics"][metric] = m;
        }
        out["delta_per"] = b.at("per").get<double>() - a.at("per").get<double>();
        out["delta_pdr"] = b.at("pdr").get<double>() - a.at("pdr").get<double>();
        return out;
    } catch (const json::exception& e) {
        throw IncompatibleReports(std::string("malformed report: ") + e.what());
    }
}

}  // namespace ptxlink::metrics
