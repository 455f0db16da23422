#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "ptxlink/protocol/bytes.hpp"
#include "ptxlink/protocol/command.hpp"
#include "ptxlink/protocol/frame.hpp"

namespace ptxlink::protocol {

// Authenticated-channel contract used between the control room and the jump
// host. Sessions are token gated; every COMMAND carries the session id, a
// client command id and a truncated HMAC-SHA256 tag keyed by a per-session
// key derived from the token. Confidentiality is not provided.

using SessionId = std::uint64_t;
using SessionKey = std::array<std::uint8_t, 32>;
using CommandTag = std::array<std::uint8_t, 16>;

class AuthRejected : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class AuthTimeout : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

SessionKey derive_session_key(std::string_view token, SessionId session);

/// Bitmask of MsgType values a session may use.
using OpMask = std::uint32_t;
constexpr OpMask op_bit(MsgType t) { return OpMask{1} << static_cast<std::uint8_t>(t); }

enum class AuthStatus : std::uint8_t { ok = 0, rejected = 1 };

struct AuthReply {
    AuthStatus status = AuthStatus::rejected;
    SessionId session = 0;
    std::uint64_t expires_at_us = 0;
    OpMask allowed_ops = 0;

    bool operator==(const AuthReply&) const = default;
};

Bytes encode_auth_request(std::string_view token);
/// Token carried by an AUTH request payload; throws Truncated on malformed input.
std::string decode_auth_request(std::span<const std::uint8_t> payload);
Bytes encode_auth_reply(const AuthReply& reply);
AuthReply decode_auth_reply(std::span<const std::uint8_t> payload);
/// True when the AUTH payload is a reply rather than a request.
bool is_auth_reply(std::span<const std::uint8_t> payload);

/// COMMAND payload: session id, client command id, command body, tag.
struct SealedCommand {
    SessionId session = 0;
    std::uint32_t command_id = 0;
    CommandMessage command;
    CommandTag tag{};
};

inline constexpr std::size_t kSealedCommandSize = 8 + 4 + kCommandBodySize + 16;

CommandTag command_tag(const SessionKey& key, SessionId session, std::uint32_t command_id,
                       const CommandMessage& command);
Bytes seal_command(const SessionKey& key, SessionId session, std::uint32_t command_id, const CommandMessage& command);
SealedCommand parse_sealed_command(std::span<const std::uint8_t> payload);
bool verify_command(const SessionKey& key, const SealedCommand& sealed);

/// Client side of session establishment.
class SessionClient {
public:
    explicit SessionClient(std::string token) : token_(std::move(token)) {}

    Bytes auth_request() const { return encode_auth_request(token_); }
    /// Consumes an AUTH reply; throws AuthRejected when the jump host refused.
    void accept_reply(std::span<const std::uint8_t> payload);

    bool established() const noexcept { return reply_.has_value(); }
    SessionId session() const;
    std::uint64_t expires_at_us() const;
    /// Next sealed COMMAND payload; command ids increase from 1.
    Bytes seal(const CommandMessage& command);
    std::uint32_t last_command_id() const noexcept { return next_command_id_ - 1; }

private:
    std::string token_;
    std::optional<AuthReply> reply_;
    SessionKey key_{};
    std::uint32_t next_command_id_ = 1;
};

enum class ReplyStatus : std::uint8_t { accepted = 0, rejected = 1 };

/// Robot answer to a command, relayed back to the control room as an ACK
/// frame with a non-empty payload.
struct CommandReply {
    SessionId session = 0;
    std::uint32_t command_id = 0;
    ReplyStatus status = ReplyStatus::accepted;
    std::string reason;
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
    double battery = 0.0;
    Gait gait = Gait::idle;

    bool operator==(const CommandReply&) const = default;
};

Bytes encode_command_reply(const CommandReply& r);
CommandReply decode_command_reply(std::span<const std::uint8_t> payload);

}  // namespace ptxlink::protocol
