#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>

#include "ptxlink/protocol/bytes.hpp"

namespace ptxlink::protocol {

enum class MsgType : std::uint8_t { telemetry = 1, command = 2, ack = 3, auth = 4, metric = 5 };

std::string_view to_string(MsgType t);
bool is_known(MsgType t);

// Wire layout, big-endian throughout:
//   0  magic "PTX1"      4
//   4  version           1
//   5  msg_type          1
//   6  flags             2   bit0 = retransmission
//   8  seq               4
//  12  timestamp_us      8
//  20  payload_len       4
//  24  payload           payload_len
//  ..  crc32 (IEEE)      4   over header and payload
inline constexpr std::array<std::uint8_t, 4> kMagic{0x50, 0x54, 0x58, 0x31};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 24;
inline constexpr std::size_t kTrailerSize = 4;
inline constexpr std::size_t kFrameOverhead = kHeaderSize + kTrailerSize;
inline constexpr std::size_t kMaxPayload = 16u * 1024u * 1024u;
inline constexpr std::uint16_t kFlagRetransmission = 0x0001;

struct Frame {
    MsgType type = MsgType::telemetry;
    std::uint16_t flags = 0;
    std::uint32_t seq = 0;
    std::uint64_t timestamp_us = 0;
    Bytes payload;

    bool retransmission() const noexcept { return (flags & kFlagRetransmission) != 0; }
    bool operator==(const Frame&) const = default;
};

class PayloadTooLarge : public std::length_error {
public:
    explicit PayloadTooLarge(std::size_t n);
};

enum class DecodeErrorKind { truncated, bad_magic, unsupported_version };

class DecodeError : public std::runtime_error {
public:
    DecodeError(DecodeErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    DecodeErrorKind kind() const noexcept { return kind_; }

private:
    DecodeErrorKind kind_;
};

std::uint32_t crc32_ieee(std::span<const std::uint8_t> data);

Bytes encode_frame(const Frame& f);
Bytes encode_frame(MsgType type, std::uint32_t seq, std::uint64_t timestamp_us, std::span<const std::uint8_t> payload,
                   std::uint16_t flags = 0);

struct DecodedFrame {
    Frame frame;
    bool crc_failed = false;
    /// Bytes consumed from the input (header + payload + trailer).
    std::size_t consumed = 0;
};

/// Decodes the frame at the start of `bytes`. A CRC mismatch does not throw:
/// the frame is returned with crc_failed set so it can be accounted.
DecodedFrame decode_frame(std::span<const std::uint8_t> bytes);

/// Total encoded length announced by a header, if enough bytes are present
/// to read it; used to split a byte stream into frames.
std::optional<std::size_t> peek_frame_length(std::span<const std::uint8_t> bytes);

}  // namespace ptxlink::protocol
