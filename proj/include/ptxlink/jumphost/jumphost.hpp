#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptxlink/netemu/rng.hpp"
#include "ptxlink/netemu/scheduler.hpp"
#include "ptxlink/protocol/session.hpp"

namespace ptxlink::jumphost {

using netemu::Micros;
using protocol::AuthRejected;
using protocol::OpMask;
using protocol::SessionId;

struct Operator {
    std::string principal;
    std::string token;
    OpMask allowed_ops = 0;
    std::optional<Micros> expires_at_us;
};

class OperatorRegistry {
public:
    OperatorRegistry() = default;
    explicit OperatorRegistry(std::vector<Operator> ops);

    /// `[{principal, token, allowed_ops: ["command", ...], expires_at_s?}]`
    static OperatorRegistry from_json(const nlohmann::json& j);
    static OperatorRegistry load(const std::string& path);

    const Operator* find(std::string_view token) const;
    const std::vector<Operator>& operators() const noexcept { return ops_; }

private:
    std::vector<Operator> ops_;
};

struct Session {
    SessionId id = 0;
    std::string principal;
    Micros issued_at = 0;
    Micros expires_at = 0;
    OpMask allowed_ops = 0;
    protocol::SessionKey key{};

    bool valid_at(Micros t) const noexcept { return t >= issued_at && t < expires_at; }
};

std::string session_label(SessionId id);

// --- audit ------------------------------------------------------------------

enum class AuditEvent : std::uint8_t { auth_ok = 0, auth_fail = 1, cmd_forwarded = 2, cmd_rejected = 3, session_expired = 4 };

std::string_view to_string(AuditEvent e);
AuditEvent audit_event_from_string(std::string_view s);

using Digest = std::array<std::uint8_t, 32>;

struct AuditEntry {
    std::uint64_t seq = 0;
    Micros timestamp_us = 0;
    /// Hex session id, or "unauthenticated".
    std::string session;
    AuditEvent event = AuditEvent::auth_fail;
    /// Command id for command events, 0 otherwise.
    std::uint64_t ref = 0;
    /// Session expiry in force when the entry was written (0 if none).
    Micros expires_at_us = 0;
    std::string detail;
    Digest digest{};

    bool operator==(const AuditEntry&) const = default;
};

/// Canonical bytes hashed into the chain (everything but the digest).
protocol::Bytes canonical_body(const AuditEntry& e);
/// digest(n) = SHA-256(digest(n-1) || body(n)); the genesis digest is all zeros.
Digest chain_digest(const Digest& prev, const AuditEntry& e);

struct AuditVerdict {
    bool intact = true;
    std::optional<std::uint64_t> broken_at;
};

AuditVerdict verify_audit(std::span<const AuditEntry> log);

/// Hash-chained, append-only audit log with exactly one writer.
class AuditLog {
public:
    const AuditEntry& append(Micros at, std::string session, AuditEvent event, std::uint64_t ref = 0,
                             Micros expires_at = 0, std::string detail = {});
    const std::vector<AuditEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    AuditVerdict verify() const { return verify_audit(entries_); }

private:
    std::vector<AuditEntry> entries_;
};

/// Binary export ("PTXA", count, then body and digest per entry). decode
/// throws protocol::Truncated on malformed input, including trailing bytes.
protocol::Bytes encode_audit(std::span<const AuditEntry> log);
std::vector<AuditEntry> decode_audit(std::span<const std::uint8_t> bytes);

/// JSON-lines with hex digests.
void write_audit_jsonl(std::ostream& out, std::span<const AuditEntry> log);
std::vector<AuditEntry> read_audit_jsonl(std::istream& in);
nlohmann::json to_json(const AuditEntry& e);

// --- tunnelling -------------------------------------------------------------

enum class RejectReason { unauthenticated, session_expired, policy, integrity, replay, malformed };

std::string_view to_string(RejectReason r);

class TunnelError : public std::runtime_error {
public:
    TunnelError(RejectReason reason, const std::string& what) : std::runtime_error(what), reason_(reason) {}
    RejectReason reason() const noexcept { return reason_; }

private:
    RejectReason reason_;
};

class SessionExpired : public TunnelError {
public:
    explicit SessionExpired(const std::string& what) : TunnelError(RejectReason::session_expired, what) {}
};

class PolicyViolation : public TunnelError {
public:
    PolicyViolation(RejectReason reason, const std::string& what) : TunnelError(reason, what) {}
};

struct JumpHostConfig {
    Micros session_ttl_us = 15 * 60 * netemu::kMicrosPerSecond;
    /// Processing inside the tunnel before a command is forwarded.
    Micros tunnel_hop_us = 1'000;
    protocol::CommandCaps caps;
};

/// Access control point: authenticates operators, checks every COMMAND
/// against its session and audits every decision.
class JumpHost {
public:
    JumpHost(OperatorRegistry registry, JumpHostConfig config, std::uint64_t seed);

    /// Throws AuthRejected for unknown or expired tokens.
    const Session& authenticate(std::string_view token, Micros now);
    /// AUTH payload in, AUTH reply payload out; rejections become a reply.
    protocol::Bytes handle_auth(std::span<const std::uint8_t> payload, Micros now);

    /// Verifies a sealed COMMAND payload; returns it for forwarding or throws
    /// a TunnelError (SessionExpired / PolicyViolation) after auditing.
    protocol::SealedCommand tunnel_command(std::span<const std::uint8_t> payload, Micros now);

    const AuditLog& audit() const noexcept { return audit_; }
    const JumpHostConfig& config() const noexcept { return config_; }
    const Session* session(SessionId id) const;

private:
    [[noreturn]] void reject(Micros now, const std::string& session, AuditEvent event, std::uint64_t ref,
                             Micros expires, RejectReason reason, const std::string& detail);

    OperatorRegistry registry_;
    JumpHostConfig config_;
    netemu::Rng rng_;
    std::map<SessionId, Session> sessions_;
    std::map<SessionId, std::uint32_t> last_command_;
    AuditLog audit_;
};

// --- zero-bypass replay -----------------------------------------------------

/// A COMMAND as it reached the robot.
struct RobotReceipt {
    Micros at = 0;
    SessionId session = 0;
    std::uint32_t command_id = 0;
};

struct BypassReport {
    std::size_t receipts = 0;
    std::size_t matched = 0;
    std::vector<std::string> violations;
    bool ok() const noexcept { return violations.empty(); }
};

/// Every receipt must pair, one to one, with an earlier cmd_forwarded entry
/// for the same session and command id whose session was valid at that time.
BypassReport check_zero_bypass(std::span<const AuditEntry> audit, std::span<const RobotReceipt> receipts);

}  // namespace ptxlink::jumphost
