#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptxlink/netemu/scheduler.hpp"
#include "ptxlink/protocol/arq.hpp"
#include "ptxlink/protocol/telemetry.hpp"

namespace ptxlink::aggregation {

using netemu::Micros;
using protocol::TelemetryKind;
using protocol::TelemetryRecord;

class StorageFull : public std::runtime_error {
public:
    explicit StorageFull(std::size_t capacity);
};

class InvalidRange : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct LogEntry {
    std::uint64_t offset = 0;
    TelemetryRecord record;
    Micros ingested_at = 0;

    bool operator==(const LogEntry&) const = default;
};

struct QueryFilter {
    std::optional<std::string> source;
    std::optional<TelemetryKind> kind;

    bool matches(const TelemetryRecord& r) const {
        return (!source || r.source == *source) && (!kind || r.kind == *kind);
    }
};

/// Immutable view of the first `size()` log entries. Cheap to copy and safe
/// to read from any thread while the writer keeps appending.
class LogSnapshot {
public:
    std::size_t size() const noexcept { return size_; }
    bool empty() const noexcept { return size_ == 0; }
    const LogEntry& operator[](std::size_t i) const;

    /// Records with t0 <= timestamp <= t1 matching `filter`, in timestamp
    /// order with offset as tie-break.
    std::vector<LogEntry> query(Micros t0, Micros t1, const QueryFilter& filter = {}) const;

private:
    friend class TelemetryLog;
    using Chunk = std::vector<LogEntry>;
    std::vector<std::shared_ptr<const Chunk>> chunks_;
    std::size_t size_ = 0;
};

/// Append-only in-memory log with a single writer. No deduplication.
class TelemetryLog {
public:
    /// `capacity` set ⇒ bounded mode (StorageFull once reached).
    explicit TelemetryLog(std::optional<std::size_t> capacity = std::nullopt);

    std::uint64_t ingest(TelemetryRecord record, Micros now);
    LogSnapshot snapshot() const;
    std::vector<LogEntry> query(Micros t0, Micros t1, const QueryFilter& filter = {}) const {
        return snapshot().query(t0, t1, filter);
    }
    std::size_t size() const;
    std::optional<std::size_t> capacity() const noexcept { return capacity_; }

    /// Capture-to-ingest delay of every record, in ingestion order.
    const std::vector<Micros>& ingest_latencies_us() const noexcept { return latencies_; }

private:
    static constexpr std::size_t kChunk = 1024;

    std::optional<std::size_t> capacity_;
    mutable std::mutex mu_;
    std::vector<std::shared_ptr<LogSnapshot::Chunk>> chunks_;
    std::size_t size_ = 0;
    std::vector<Micros> latencies_;
};

/// JSON-lines, one record per line, payload base64.
void write_snapshot_jsonl(std::ostream& out, const LogSnapshot& snap);
std::vector<LogEntry> read_snapshot_jsonl(std::istream& in);

std::string base64_encode(std::span<const std::uint8_t> b);
protocol::Bytes base64_decode(std::string_view s);

// --- anomaly rules ----------------------------------------------------------

enum class RuleOp { greater, less, abs_delta_greater };

std::string_view to_string(RuleOp op);
RuleOp rule_op_from_string(std::string_view s);

struct AnomalyRule {
    std::string id;
    std::optional<TelemetryKind> kind;
    std::string field;
    RuleOp op = RuleOp::greater;
    double threshold = 0.0;
    double window_s = 0.0;

    void validate() const;
};

std::vector<AnomalyRule> rules_from_json(const nlohmann::json& j);
std::vector<AnomalyRule> load_rules(const std::string& path);

struct Alarm {
    std::string rule_id;
    std::string source;
    Micros trigger_us = 0;
    /// The reading, or the absolute change for delta rules.
    double observed = 0.0;

    bool operator==(const Alarm&) const = default;
};

nlohmann::json to_json(const Alarm& a);

/// Numeric top-level fields of a JSON payload; empty for binary payloads.
std::map<std::string, double> scalar_channels(const TelemetryRecord& r);

class RuleEngine {
public:
    explicit RuleEngine(std::vector<AnomalyRule> rules);

    std::vector<Alarm> evaluate(const TelemetryRecord& r);

    const std::vector<AnomalyRule>& rules() const noexcept { return rules_; }
    /// Rule applications skipped because the record lacked the channel.
    std::size_t skipped() const noexcept { return skipped_; }

private:
    struct Last {
        Micros at;
        double value;
    };
    std::vector<AnomalyRule> rules_;
    std::map<std::pair<std::size_t, std::string>, Last> last_;
    std::size_t skipped_ = 0;
};

// --- store-and-forward ------------------------------------------------------

/// Batch payload: u32 count, then per record u32 length and encoded record.
protocol::Bytes encode_batch(const std::vector<TelemetryRecord>& records);
std::vector<TelemetryRecord> decode_batch(std::span<const std::uint8_t> payload);

/// Shore-side receiver of forwarded batches.
class TwinEndpoint {
public:
    void deliver(const protocol::Frame& f);

    const std::vector<TelemetryRecord>& received() const noexcept { return received_; }
    /// Everything received, ordered by timestamp (arrival order as tie-break).
    std::vector<TelemetryRecord> merged() const;
    std::size_t batches() const noexcept { return batches_; }

private:
    std::vector<TelemetryRecord> received_;
    std::size_t batches_ = 0;
};

struct ForwarderConfig {
    std::size_t batch_records = 100;
    std::size_t batch_max_bytes = 4 * 1024 * 1024;
    Micros batch_interval_us = 5'000'000;
    Micros retry_interval_us = 1'000'000;
};

/// Ships every ingested record to the twin in offset order. Failed batches
/// stay with the ARQ sender and are retried after `retry_interval_us`.
class Forwarder {
public:
    Forwarder(netemu::Scheduler& scheduler, const TelemetryLog& log, protocol::ArqChannel& channel,
              ForwarderConfig config = {});
    Forwarder(const Forwarder&) = delete;
    Forwarder& operator=(const Forwarder&) = delete;

    /// Periodic flushing every batch_interval_us.
    void start();
    void stop();
    /// Batches everything not yet forwarded (full batches only unless `all`).
    void flush(bool all = true);
    /// Explicit transfer job for a time range; returns the number of batches queued.
    std::size_t forward_range(Micros t0, Micros t1, const QueryFilter& filter = {});

    std::uint64_t forwarded_offset() const noexcept { return next_offset_; }
    std::size_t batches_sent() const noexcept { return batches_sent_; }
    std::size_t batches_acked() const noexcept { return batches_acked_; }
    std::size_t retained_events() const noexcept { return retained_; }
    bool drained() const noexcept { return batches_acked_ == batches_sent_; }

private:
    void ship(std::vector<TelemetryRecord> batch);
    void on_done(const protocol::SendResult& r);

    netemu::Scheduler& scheduler_;
    const TelemetryLog& log_;
    protocol::ArqChannel& channel_;
    ForwarderConfig config_;
    std::uint64_t next_offset_ = 0;
    std::size_t batches_sent_ = 0;
    std::size_t batches_acked_ = 0;
    std::size_t retained_ = 0;
    bool retry_scheduled_ = false;
    bool running_ = false;
    std::optional<netemu::EventId> timer_;
};

}  // namespace ptxlink::aggregation
