#include "ptxlink/protocol/frame.hpp"

#include <algorithm>

#include <zlib.h>

namespace ptxlink::protocol {

std::string_view to_string(MsgType t) {
    switch (t) {
        case MsgType::telemetry: return "telemetry";
        case MsgType::command: return "command";
        case MsgType::ack: return "ack";
        case MsgType::auth: return "auth";
        case MsgType::metric: return "metric";
    }
    return "unknown";
}

bool is_known(MsgType t) {
    const auto v = static_cast<std::uint8_t>(t);
    return v >= 1 && v <= 5;
}

PayloadTooLarge::PayloadTooLarge(std::size_t n)
    : std::length_error("payload of " + std::to_string(n) + " bytes exceeds the 16 MiB frame limit") {}

std::uint32_t crc32_ieee(std::span<const std::uint8_t> data) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; frames are capped well below 4 GiB.
    crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    return static_cast<std::uint32_t>(crc);
}

Bytes encode_frame(MsgType type, std::uint32_t seq, std::uint64_t timestamp_us, std::span<const std::uint8_t> payload,
                   std::uint16_t flags) {
    if (payload.size() > kMaxPayload) {
        throw PayloadTooLarge(payload.size());
    }
    Bytes out;
    out.reserve(kFrameOverhead + payload.size());
    ByteWriter w(out);
    w.raw(kMagic);
    w.u8(kVersion);
    w.u8(static_cast<std::uint8_t>(type));
    w.u16(flags);
    w.u32(seq);
    w.u64(timestamp_us);
    w.u32(static_cast<std::uint32_t>(payload.size()));
    w.raw(payload);
    w.u32(crc32_ieee(out));
    return out;
}

Bytes encode_frame(const Frame& f) { return encode_frame(f.type, f.seq, f.timestamp_us, f.payload, f.flags); }

std::optional<std::size_t> peek_frame_length(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderSize) {
        return std::nullopt;
    }
    ByteReader r(bytes.subspan(20, 4));
    return kFrameOverhead + r.u32();
}

DecodedFrame decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagic.size()) {
        throw DecodeError(DecodeErrorKind::truncated, "frame shorter than its magic");
    }
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw DecodeError(DecodeErrorKind::bad_magic, "bad frame magic");
    }
    if (bytes.size() < kHeaderSize) {
        throw DecodeError(DecodeErrorKind::truncated, "frame header truncated");
    }
    if (bytes[4] != kVersion) {
        throw DecodeError(DecodeErrorKind::unsupported_version, "unsupported frame version " + std::to_string(bytes[4]));
    }
    ByteReader r(bytes.subspan(5));
    DecodedFrame d;
    d.frame.type = static_cast<MsgType>(r.u8());
    d.frame.flags = r.u16();
    d.frame.seq = r.u32();
    d.frame.timestamp_us = r.u64();
    const std::uint32_t len = r.u32();
    if (len > kMaxPayload || bytes.size() - kHeaderSize < std::size_t{len} + kTrailerSize) {
        throw DecodeError(DecodeErrorKind::truncated, "frame announces " + std::to_string(len) +
                                                          " payload bytes, only " +
                                                          std::to_string(bytes.size() - kHeaderSize) + " present");
    }
    const auto payload = bytes.subspan(kHeaderSize, len);
    d.frame.payload.assign(payload.begin(), payload.end());
    ByteReader tr(bytes.subspan(kHeaderSize + len, kTrailerSize));
    const std::uint32_t crc = tr.u32();
    d.crc_failed = crc != crc32_ieee(bytes.first(kHeaderSize + len));
    d.consumed = kHeaderSize + len + kTrailerSize;
    return d;
}

std::string to_hex(std::span<const std::uint8_t> b) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s;
    s.reserve(b.size() * 2);
    for (const auto x : b) {
        s.push_back(kDigits[x >> 4]);
        s.push_back(kDigits[x & 0xf]);
    }
    return s;
}

Bytes from_hex(std::string_view hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    Bytes out;
    int hi = -1;
    for (const char c : hex) {
        if (c == ' ' || c == '\n' || c == '\t' || c == '\r') continue;
        const int v = nibble(c);
        if (v < 0) throw std::invalid_argument("invalid hex digit");
        if (hi < 0) {
            hi = v;
        } else {
            out.push_back(static_cast<std::uint8_t>((hi << 4) | v));
            hi = -1;
        }
    }
    if (hi >= 0) throw std::invalid_argument("odd number of hex digits");
    return out;
}

}  // namespace ptxlink::protocol
