#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptxlink/netemu/config.hpp"
#include "ptxlink/netemu/scheduler.hpp"
#include "ptxlink/netemu/trace.hpp"
#include "ptxlink/protocol/arq.hpp"
#include "ptxlink/protocol/telemetry.hpp"

namespace ptxlink::metrics {

using netemu::Micros;

class EmptyInput : public std::invalid_argument {
public:
    EmptyInput() : std::invalid_argument("summary of an empty sample") {}
};

class EmptyRun : public std::invalid_argument {
public:
    EmptyRun() : std::invalid_argument("ratio over a run with nothing sent") {}
};

class IncompatibleReports : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// --- summaries --------------------------------------------------------------

struct BoxStats {
    std::size_t n = 0;
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double whisker_low = 0.0;
    double whisker_high = 0.0;
    std::vector<double> outliers;

    bool operator==(const BoxStats&) const = default;
};

/// Linear interpolation between order statistics (type 7) on sorted input.
double quantile_sorted(std::span<const double> sorted, double p);

/// Box-and-whisker summary with Tukey 1.5 IQR whiskers.
BoxStats summarize(std::vector<double> samples);

nlohmann::json to_json(const BoxStats& b);

// --- packet accounting ------------------------------------------------------

struct PacketAccounting {
    std::uint64_t sent = 0;
    std::uint64_t received_correct = 0;
    std::uint64_t received_corrupted = 0;
    std::uint64_t missing = 0;

    bool balanced() const noexcept { return sent == received_correct + received_corrupted + missing; }
    bool operator==(const PacketAccounting&) const = default;
};

double compute_per(const PacketAccounting& a);
double compute_pdr(const PacketAccounting& a);

nlohmann::json to_json(const PacketAccounting& a);

/// Incremental single-writer sink fed by ArqChannel attempt observers.
class AccountingSink {
public:
    void record(protocol::AttemptStatus status);
    void attach(protocol::ArqChannel& channel);
    /// Attempts still in flight become missing.
    const PacketAccounting& close();
    const PacketAccounting& accounting() const noexcept { return acct_; }

private:
    PacketAccounting acct_;
};

/// Brute-force recount over raw trace records: every data attempt (attempt
/// >= 1) is sent; its outcome decides the bucket. Deliveries scheduled after
/// `closed_at` count as missing.
PacketAccounting recount(std::span<const netemu::TraceRecord> trace, std::optional<Micros> closed_at = std::nullopt);

// --- samples ----------------------------------------------------------------

enum class MetricKind { transmission_latency_ms, processing_ms, rtt_ms };

std::string_view to_string(MetricKind k);

struct MetricSample {
    MetricKind kind = MetricKind::transmission_latency_ms;
    double value_ms = 0.0;
    std::uint64_t run = 0;
    std::string network;
    std::string deployment;
    std::size_t payload_bytes = 0;
};

/// CSV with header run,kind,network,deployment,payload_bytes,value_ms.
void write_samples_csv(std::ostream& out, std::span<const MetricSample> samples);

// --- experiments ------------------------------------------------------------

struct ExperimentSpec {
    std::string scenario = "setup1";
    std::string network = "5g_sa";
    std::string deployment = "orchestrated";
    std::size_t n = 1'760;
    protocol::PayloadModel payload;
    std::uint64_t seed = 42;
    std::string client = "robot";
    std::string server = "platform_edge";
    std::size_t mtu_payload = 1'372;
    std::size_t response_bytes = 64;
    std::uint16_t request_window = 256;
    protocol::ArqConfig arq;
    /// Overrides applied on top of the built-in profile set.
    nlohmann::json profile_overrides = nlohmann::json::object();
    nlohmann::json deployment_overrides = nlohmann::json::object();

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentSpec from_json(const nlohmann::json& j);
};

struct TransferSample {
    double transmission_ms = 0.0;
    double processing_ms = 0.0;
    double rtt_ms = 0.0;
};

struct ExperimentResult {
    ExperimentSpec spec;
    std::vector<MetricSample> samples;
    BoxStats transmission;
    BoxStats processing;
    PacketAccounting accounting;
    double per = 0.0;
    double pdr = 0.0;
    std::size_t dropped = 0;
    netemu::TraceLog trace;
    Micros closed_at = 0;
};

/// Single request/response exchange through two ARQ channels. The request
/// payload is split into mtu-sized frames and sent as one burst; the server
/// answers after a processing draw. Returns nullopt when either direction
/// exhausted its retries (a dropped sample).
std::optional<TransferSample> measure_transfer(netemu::Scheduler& sched, protocol::ArqChannel& request,
                                               protocol::ArqChannel& response, std::size_t payload_bytes,
                                               const netemu::DeploymentProfile& deployment, netemu::Rng& rng,
                                               std::size_t mtu_payload = 1'372, std::size_t response_bytes = 64);

/// n sequential transfers between spec.client and spec.server over the
/// preset topology, with per-transfer channels on persistent links.
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// {spec, box_stats, accounting, per, pdr, dropped, samples_path}
nlohmann::json report_json(const ExperimentResult& r, const std::string& samples_path = {});

/// Per-metric deltas (b - a) and median ratios (a / b).
nlohmann::json compare_reports(const nlohmann::json& a, const nlohmann::json& b);

}  // namespace ptxlink::metrics
