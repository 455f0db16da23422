#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptxlink/netemu/link.hpp"

namespace ptxlink::netemu {

/// One frame transmission attempt and its fate, as exported to the trace.
struct TraceRecord {
    std::string channel;
    std::uint8_t msg_type = 0;
    std::uint32_t seq = 0;
    std::uint16_t attempt = 0;
    std::size_t bytes = 0;
    DeliveryOutcome outcome;

    bool operator==(const TraceRecord&) const = default;
};

nlohmann::json to_json(const TraceRecord& r);
TraceRecord trace_record_from_json(const nlohmann::json& j);

/// Append-only DeliveryOutcome log; single writer per run.
class TraceLog {
public:
    void append(TraceRecord r) { records_.push_back(std::move(r)); }
    const std::vector<TraceRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }

private:
    std::vector<TraceRecord> records_;
};

/// JSON-lines: an optional header object on the first line (key "header"),
/// then one DeliveryOutcome per line.
void write_trace_jsonl(std::ostream& out, const nlohmann::json& header, const std::vector<TraceRecord>& records);
std::string trace_jsonl(const nlohmann::json& header, const std::vector<TraceRecord>& records);

struct ParsedTrace {
    nlohmann::json header;
    std::vector<TraceRecord> records;
};
ParsedTrace read_trace_jsonl(std::istream& in);

}  // namespace ptxlink::netemu
