#include "ptxlink/aggregation/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <openssl/evp.h>

#include "ptxlink/netemu/link.hpp"

namespace ptxlink::aggregation {

using netemu::ConfigError;
using nlohmann::json;

StorageFull::StorageFull(std::size_t capacity)
    : std::runtime_error("telemetry log full (capacity " + std::to_string(capacity) + ")") {}

// --- log --------------------------------------------------------------------

const LogEntry& LogSnapshot::operator[](std::size_t i) const {
    if (i >= size_) throw std::out_of_range("snapshot index");
    return (*chunks_[i / 1024])[i % 1024];
}

std::vector<LogEntry> LogSnapshot::query(Micros t0, Micros t1, const QueryFilter& filter) const {
    if (t0 > t1) throw InvalidRange("query range start after end");
    std::vector<LogEntry> out;
    for (std::size_t i = 0; i < size_; ++i) {
        const auto& e = (*this)[i];
        if (e.record.timestamp_us >= t0 && e.record.timestamp_us <= t1 && filter.matches(e.record)) out.push_back(e);
    }
    std::stable_sort(out.begin(), out.end(), [](const LogEntry& a, const LogEntry& b) {
        return a.record.timestamp_us != b.record.timestamp_us ? a.record.timestamp_us < b.record.timestamp_us
                                                              : a.offset < b.offset;
    });
    return out;
}

TelemetryLog::TelemetryLog(std::optional<std::size_t> capacity) : capacity_(capacity) {}

std::uint64_t TelemetryLog::ingest(TelemetryRecord record, Micros now) {
    std::lock_guard lock(mu_);
    if (capacity_ && size_ >= *capacity_) throw StorageFull(*capacity_);
    if (size_ % kChunk == 0) {
        auto chunk = std::make_shared<LogSnapshot::Chunk>();
        chunk->reserve(kChunk);
        chunks_.push_back(std::move(chunk));
    }
    const std::uint64_t offset = size_;
    latencies_.push_back(std::max<Micros>(0, now - record.timestamp_us));
    // The chunk never reallocates (reserved), so published entries stay put.
    chunks_.back()->push_back(LogEntry{offset, std::move(record), now});
    ++size_;
    return offset;
}

LogSnapshot TelemetryLog::snapshot() const {
    std::lock_guard lock(mu_);
    LogSnapshot s;
    s.chunks_.assign(chunks_.begin(), chunks_.end());
    s.size_ = size_;
    return s;
}

std::size_t TelemetryLog::size() const {
    std::lock_guard lock(mu_);
    return size_;
}

// --- snapshot files ---------------------------------------------------------

std::string base64_encode(std::span<const std::uint8_t> b) {
    std::string out(4 * ((b.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), b.data(), static_cast<int>(b.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

protocol::Bytes base64_decode(std::string_view s) {
    if (s.size() % 4 != 0) throw std::invalid_argument("base64 length not a multiple of 4");
    protocol::Bytes out(3 * s.size() / 4);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(s.data()), static_cast<int>(s.size()));
    if (n < 0) throw std::invalid_argument("malformed base64");
    std::size_t len = static_cast<std::size_t>(n);
    // EVP_DecodeBlock keeps the zero bytes produced by padding.
    if (!s.empty() && s.back() == '=') --len;
    if (s.size() > 1 && s[s.size() - 2] == '=') --len;
    out.resize(len);
    return out;
}

void write_snapshot_jsonl(std::ostream& out, const LogSnapshot& snap) {
    for (std::size_t i = 0; i < snap.size(); ++i) {
        const auto& e = snap[i];
        json j = {{"offset", e.offset},
                  {"source", e.record.source},
                  {"kind", protocol::to_string(e.record.kind)},
                  {"timestamp_us", e.record.timestamp_us},
                  {"ingested_at_us", e.ingested_at},
                  {"payload_size", e.record.payload_size()},
                  {"payload", base64_encode(e.record.payload)}};
        out << j.dump() << '\n';
    }
}

std::vector<LogEntry> read_snapshot_jsonl(std::istream& in) {
    std::vector<LogEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        LogEntry e;
        e.offset = j.at("offset").get<std::uint64_t>();
        e.record.source = j.at("source").get<std::string>();
        e.record.kind = protocol::telemetry_kind_from_string(j.at("kind").get<std::string>());
        e.record.timestamp_us = j.at("timestamp_us").get<Micros>();
        e.ingested_at = j.value("ingested_at_us", Micros{0});
        e.record.payload = base64_decode(j.at("payload").get<std::string>());
        if (e.record.payload_size() != j.at("payload_size").get<std::size_t>())
            throw std::invalid_argument("payload_size mismatch at offset " + std::to_string(e.offset));
        out.push_back(std::move(e));
    }
    return out;
}

// --- rules ------------------------------------------------------------------

std::string_view to_string(RuleOp op) {
    switch (op) {
        case RuleOp::greater: return ">";
        case RuleOp::less: return "<";
        case RuleOp::abs_delta_greater: return "abs_delta>";
    }
    return "?";
}

RuleOp rule_op_from_string(std::string_view s) {
    if (s == ">") return RuleOp::greater;
    if (s == "<") return RuleOp::less;
    if (s == "abs_delta>") return RuleOp::abs_delta_greater;
    throw ConfigError("unknown rule op '" + std::string(s) + "'");
}

void AnomalyRule::validate() const {
    if (id.empty()) throw ConfigError("rule without id");
    if (field.empty()) throw ConfigError("rule " + id + " has no field");
    if (!std::isfinite(threshold)) throw ConfigError("rule " + id + " threshold not finite");
    if (op == RuleOp::abs_delta_greater && !(window_s > 0.0))
        throw ConfigError("delta rule " + id + " needs window_s > 0");
}

std::vector<AnomalyRule> rules_from_json(const json& j) {
    std::vector<AnomalyRule> out;
    try {
        for (const auto& r : j) {
            AnomalyRule rule;
            rule.id = r.at("id").get<std::string>();
            if (r.contains("kind") && !r.at("kind").is_null())
                rule.kind = protocol::telemetry_kind_from_string(r.at("kind").get<std::string>());
            rule.field = r.at("field").get<std::string>();
            rule.op = rule_op_from_string(r.at("op").get<std::string>());
            rule.threshold = r.at("threshold").get<double>();
            rule.window_s = r.value("window_s", 0.0);
            rule.validate();
            out.push_back(std::move(rule));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("rule file: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("rule file: ") + e.what());
    }
    return out;
}

std::vector<AnomalyRule> load_rules(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("rules file not found: " + path);
    try {
        return rules_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ConfigError("rules file " + path + ": " + e.what());
    }
}

json to_json(const Alarm& a) {
    return {{"rule_id", a.rule_id}, {"source", a.source}, {"trigger_us", a.trigger_us}, {"observed", a.observed}};
}

std::map<std::string, double> scalar_channels(const TelemetryRecord& r) {
    std::map<std::string, double> out;
    if (r.kind == TelemetryKind::image || r.payload.empty() || r.payload.front() != '{') return out;
    const auto j = json::parse(r.payload.begin(), r.payload.end(), nullptr, false);
    if (!j.is_object()) return out;
    for (const auto& [k, v] : j.items()) {
        if (v.is_number()) out.emplace(k, v.get<double>());
    }
    return out;
}

RuleEngine::RuleEngine(std::vector<AnomalyRule> rules) : rules_(std::move(rules)) {
    for (const auto& r : rules_) r.validate();
}

std::vector<Alarm> RuleEngine::evaluate(const TelemetryRecord& rec) {
    std::vector<Alarm> alarms;
    const auto channels = scalar_channels(rec);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& rule = rules_[i];
        if (rule.kind && *rule.kind != rec.kind) continue;
        const auto it = channels.find(rule.field);
        if (it == channels.end()) {
            ++skipped_;
            continue;
        }
        const double v = it->second;
        switch (rule.op) {
            case RuleOp::greater:
                if (v > rule.threshold) alarms.push_back({rule.id, rec.source, rec.timestamp_us, v});
                break;
            case RuleOp::less:
                if (v < rule.threshold) alarms.push_back({rule.id, rec.source, rec.timestamp_us, v});
                break;
            case RuleOp::abs_delta_greater: {
                const auto key = std::make_pair(i, rec.source);
                const auto prev = last_.find(key);
                if (prev != last_.end() && rec.timestamp_us - prev->second.at <= netemu::from_seconds(rule.window_s)) {
                    const double d = std::abs(v - prev->second.value);
                    if (d > rule.threshold) alarms.push_back({rule.id, rec.source, rec.timestamp_us, d});
                }
                last_[key] = {rec.timestamp_us, v};
                break;
            }
        }
    }
    return alarms;
}

// --- forwarding -------------------------------------------------------------

protocol::Bytes encode_batch(const std::vector<TelemetryRecord>& records) {
    protocol::Bytes out;
    protocol::ByteWriter w(out);
    w.u32(static_cast<std::uint32_t>(records.size()));
    for (const auto& r : records) {
        const auto enc = protocol::encode_telemetry(r);
        w.u32(static_cast<std::uint32_t>(enc.size()));
        w.raw(enc);
    }
    return out;
}

std::vector<TelemetryRecord> decode_batch(std::span<const std::uint8_t> payload) {
    protocol::ByteReader rd(payload);
    const auto n = rd.u32();
    std::vector<TelemetryRecord> out;
    out.reserve(std::min<std::size_t>(n, 4096));
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto len = rd.u32();
        out.push_back(protocol::decode_telemetry(rd.raw(len)));
    }
    return out;
}

void TwinEndpoint::deliver(const protocol::Frame& f) {
    if (f.type != protocol::MsgType::telemetry) return;
    auto batch = decode_batch(f.payload);
    received_.insert(received_.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
    ++batches_;
}

std::vector<TelemetryRecord> TwinEndpoint::merged() const {
    auto out = received_;
    std::stable_sort(out.begin(), out.end(),
                     [](const TelemetryRecord& a, const TelemetryRecord& b) { return a.timestamp_us < b.timestamp_us; });
    return out;
}

Forwarder::Forwarder(netemu::Scheduler& scheduler, const TelemetryLog& log, protocol::ArqChannel& channel,
                     ForwarderConfig config)
    : scheduler_(scheduler), log_(log), channel_(channel), config_(config) {
    if (config_.batch_records == 0) throw ConfigError("batch_records must be positive");
}

void Forwarder::start() {
    if (running_) return;
    running_ = true;
    timer_ = scheduler_.schedule_after(config_.batch_interval_us, [this] {
        timer_.reset();
        flush(true);
        running_ = false;
        start();
    }, "forward-flush");
}

void Forwarder::stop() {
    running_ = false;
    if (timer_) scheduler_.cancel(*timer_);
    timer_.reset();
}

void Forwarder::flush(bool all) {
    const auto snap = log_.snapshot();
    std::vector<TelemetryRecord> batch;
    std::size_t bytes = 0;
    while (next_offset_ < snap.size()) {
        const auto& rec = snap[next_offset_].record;
        const std::size_t sz = rec.payload_size() + rec.source.size() + 32;
        if (!batch.empty() && (batch.size() >= config_.batch_records || bytes + sz > config_.batch_max_bytes)) {
            ship(std::move(batch));
            batch.clear();
            bytes = 0;
        }
        batch.push_back(rec);
        bytes += sz;
        ++next_offset_;
    }
    if (batch.empty()) return;
    if (all || batch.size() >= config_.batch_records) {
        ship(std::move(batch));
    } else {
        next_offset_ -= batch.size();
    }
}

std::size_t Forwarder::forward_range(Micros t0, Micros t1, const QueryFilter& filter) {
    const auto entries = log_.query(t0, t1, filter);
    std::size_t jobs = 0;
    std::vector<TelemetryRecord> batch;
    for (const auto& e : entries) {
        batch.push_back(e.record);
        if (batch.size() >= config_.batch_records) {
            ship(std::move(batch));
            batch.clear();
            ++jobs;
        }
    }
    if (!batch.empty()) {
        ship(std::move(batch));
        ++jobs;
    }
    return jobs;
}

void Forwarder::ship(std::vector<TelemetryRecord> batch) {
    ++batches_sent_;
    channel_.send_reliable(protocol::MsgType::telemetry, encode_batch(batch),
                           [this](const protocol::SendResult& r) { on_done(r); });
}

void Forwarder::on_done(const protocol::SendResult& r) {
    if (r.delivered) {
        ++batches_acked_;
        return;
    }
    ++retained_;
    if (retry_scheduled_) return;
    retry_scheduled_ = true;
    scheduler_.schedule_after(config_.retry_interval_us, [this] {
        retry_scheduled_ = false;
        channel_.sender().resume();
    }, "forward-retry");
}

}  // namespace ptxlink::aggregation
