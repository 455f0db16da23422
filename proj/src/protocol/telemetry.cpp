#include "ptxlink/protocol/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ptxlink/netemu/link.hpp"

namespace ptxlink::protocol {

std::string_view to_string(TelemetryKind k) {
    switch (k) {
        case TelemetryKind::pose: return "pose";
        case TelemetryKind::battery: return "battery";
        case TelemetryKind::image: return "image";
        case TelemetryKind::thermal: return "thermal";
        case TelemetryKind::audio: return "audio";
        case TelemetryKind::process: return "process";
    }
    return "unknown";
}

TelemetryKind telemetry_kind_from_string(std::string_view s) {
    for (int i = 0; i <= 5; ++i) {
        const auto k = static_cast<TelemetryKind>(i);
        if (to_string(k) == s) return k;
    }
    throw std::invalid_argument("unknown telemetry kind '" + std::string(s) + "'");
}

Bytes encode_telemetry(const TelemetryRecord& r) {
    Bytes out;
    out.reserve(2 + r.source.size() + 1 + 8 + 4 + r.payload.size());
    ByteWriter w(out);
    w.str16(r.source);
    w.u8(static_cast<std::uint8_t>(r.kind));
    w.u64(static_cast<std::uint64_t>(r.timestamp_us));
    w.u32(static_cast<std::uint32_t>(r.payload.size()));
    w.raw(r.payload);
    return out;
}

TelemetryRecord decode_telemetry(std::span<const std::uint8_t> payload) {
    ByteReader rd(payload);
    TelemetryRecord r;
    r.source = rd.str16();
    const auto kind = rd.u8();
    if (kind > 5) throw Truncated("unknown telemetry kind " + std::to_string(kind));
    r.kind = static_cast<TelemetryKind>(kind);
    r.timestamp_us = static_cast<netemu::Micros>(rd.u64());
    const auto n = rd.u32();
    const auto body = rd.raw(n);
    r.payload.assign(body.begin(), body.end());
    return r;
}

void PayloadModel::validate() const {
    if (!std::isfinite(mean_bytes) || mean_bytes <= 0.0) throw netemu::ConfigError("payload mean must be positive");
    if (!std::isfinite(sigma_ratio) || sigma_ratio < 0.0) throw netemu::ConfigError("payload sigma must be >= 0");
}

std::size_t PayloadModel::sample(netemu::Rng& rng) const {
    double v = mean_bytes;
    if (sigma_ratio > 0.0) {
        v = std::normal_distribution<double>(mean_bytes, sigma_ratio * mean_bytes)(rng);
    }
    return std::max(min_bytes, static_cast<std::size_t>(std::llround(std::max(v, 0.0))));
}

Bytes synthetic_payload(std::size_t size, std::uint64_t tag) {
    Bytes out(size);
    std::uint64_t x = netemu::splitmix64(tag);
    for (std::size_t i = 0; i < size; i += 8) {
        x = netemu::splitmix64(x);
        const std::size_t n = std::min<std::size_t>(8, size - i);
        for (std::size_t k = 0; k < n; ++k) out[i + k] = static_cast<std::uint8_t>(x >> (8 * k));
    }
    return out;
}

}  // namespace ptxlink::protocol
