#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ptxlink/netemu/rng.hpp"
#include "ptxlink/netemu/scheduler.hpp"
#include "ptxlink/protocol/bytes.hpp"

namespace ptxlink::protocol {

enum class TelemetryKind : std::uint8_t { pose = 0, battery = 1, image = 2, thermal = 3, audio = 4, process = 5 };

std::string_view to_string(TelemetryKind k);
TelemetryKind telemetry_kind_from_string(std::string_view s);

struct TelemetryRecord {
    std::string source;
    TelemetryKind kind = TelemetryKind::pose;
    netemu::Micros timestamp_us = 0;
    Bytes payload;

    std::size_t payload_size() const noexcept { return payload.size(); }
    bool operator==(const TelemetryRecord&) const = default;
};

/// TELEMETRY frame payload: source str16, kind u8, timestamp u64, length u32, bytes.
Bytes encode_telemetry(const TelemetryRecord& r);
TelemetryRecord decode_telemetry(std::span<const std::uint8_t> payload);

/// Sizes of synthetic image captures: Normal(mean, sigma_ratio * mean),
/// truncated below at min_bytes.
struct PayloadModel {
    double mean_bytes = 222'800.0;
    double sigma_ratio = 0.10;
    std::size_t min_bytes = 1'024;

    void validate() const;
    std::size_t sample(netemu::Rng& rng) const;
    bool operator==(const PayloadModel&) const = default;
};

/// Opaque filler of `size` bytes; content is irrelevant to every consumer.
Bytes synthetic_payload(std::size_t size, std::uint64_t tag);

}  // namespace ptxlink::protocol
