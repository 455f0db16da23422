#include "ptxlink/netemu/trace.hpp"

#include <istream>
#include <ostream>
#include <sstream>

namespace ptxlink::netemu {

nlohmann::json to_json(const TraceRecord& r) {
    nlohmann::json j;
    j["channel"] = r.channel;
    j["msg_type"] = r.msg_type;
    j["seq"] = r.seq;
    j["attempt"] = r.attempt;
    j["bytes"] = r.bytes;
    j["status"] = std::string(to_string(r.outcome.status));
    j["send_us"] = r.outcome.send_time;
    if (r.outcome.deliver_time) {
        j["deliver_us"] = *r.outcome.deliver_time;
    }
    return j;
}

TraceRecord trace_record_from_json(const nlohmann::json& j) {
    TraceRecord r;
    try {
        r.channel = j.at("channel").get<std::string>();
        r.msg_type = j.at("msg_type").get<std::uint8_t>();
        r.seq = j.at("seq").get<std::uint32_t>();
        r.attempt = j.at("attempt").get<std::uint16_t>();
        r.bytes = j.at("bytes").get<std::size_t>();
        r.outcome.status = delivery_status_from_string(j.at("status").get<std::string>());
        r.outcome.send_time = j.at("send_us").get<Micros>();
        if (j.contains("deliver_us")) {
            r.outcome.deliver_time = j.at("deliver_us").get<Micros>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed trace record: ") + e.what());
    }
    return r;
}

void write_trace_jsonl(std::ostream& out, const nlohmann::json& header, const std::vector<TraceRecord>& records) {
    if (!header.is_null()) {
        out << nlohmann::json{{"header", header}}.dump() << '\n';
    }
    for (const auto& r : records) {
        out << to_json(r).dump() << '\n';
    }
}

std::string trace_jsonl(const nlohmann::json& header, const std::vector<TraceRecord>& records) {
    std::ostringstream os;
    write_trace_jsonl(os, header, records);
    return os.str();
}

ParsedTrace read_trace_jsonl(std::istream& in) {
    ParsedTrace out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("trace line is not JSON: ") + e.what());
        }
        if (first && j.contains("header")) {
            out.header = j.at("header");
        } else {
            out.records.push_back(trace_record_from_json(j));
        }
        first = false;
    }
    return out;
}

}  // namespace ptxlink::netemu
