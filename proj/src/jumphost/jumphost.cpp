#include "ptxlink/jumphost/jumphost.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <openssl/evp.h>

#include "ptxlink/netemu/link.hpp"

namespace ptxlink::jumphost {

using netemu::ConfigError;
using nlohmann::json;
using protocol::Bytes;
using protocol::ByteReader;
using protocol::ByteWriter;

namespace {

constexpr const char* kUnauthenticated = "unauthenticated";

OpMask ops_from_json(const json& j) {
    OpMask m = 0;
    for (const auto& name : j) {
        const auto s = name.get<std::string>();
        bool found = false;
        for (int t = 1; t <= 5; ++t) {
            if (protocol::to_string(static_cast<protocol::MsgType>(t)) == s) {
                m |= protocol::op_bit(static_cast<protocol::MsgType>(t));
                found = true;
            }
        }
        if (!found) throw ConfigError("unknown operation '" + s + "'");
    }
    return m;
}

}  // namespace

OperatorRegistry::OperatorRegistry(std::vector<Operator> ops) : ops_(std::move(ops)) {
    std::set<std::string> tokens;
    for (const auto& o : ops_) {
        if (o.token.empty()) throw ConfigError("operator " + o.principal + " has an empty token");
        if (!tokens.insert(o.token).second) throw ConfigError("duplicate operator token");
    }
}

OperatorRegistry OperatorRegistry::from_json(const json& j) {
    std::vector<Operator> ops;
    try {
        const json& list = j.is_array() ? j : j.at("operators");
        for (const auto& o : list) {
            Operator op;
            op.principal = o.at("principal").get<std::string>();
            op.token = o.at("token").get<std::string>();
            op.allowed_ops = ops_from_json(o.value("allowed_ops", json::array({"command"})));
            if (o.contains("expires_at_s")) op.expires_at_us = netemu::from_seconds(o.at("expires_at_s").get<double>());
            ops.push_back(std::move(op));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("operator registry: ") + e.what());
    }
    return OperatorRegistry(std::move(ops));
}

OperatorRegistry OperatorRegistry::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("operator registry not found: " + path);
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ConfigError("operator registry " + path + ": " + e.what());
    }
}

const Operator* OperatorRegistry::find(std::string_view token) const {
    for (const auto& o : ops_) {
        if (o.token == token) return &o;
    }
    return nullptr;
}

std::string session_label(SessionId id) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id));
    return buf;
}

// --- audit ------------------------------------------------------------------

std::string_view to_string(AuditEvent e) {
    switch (e) {
        case AuditEvent::auth_ok: return "auth_ok";
        case AuditEvent::auth_fail: return "auth_fail";
        case AuditEvent::cmd_forwarded: return "cmd_forwarded";
        case AuditEvent::cmd_rejected: return "cmd_rejected";
        case AuditEvent::session_expired: return "session_expired";
    }
    return "unknown";
}

AuditEvent audit_event_from_string(std::string_view s) {
    for (std::uint8_t i = 0; i <= 4; ++i) {
        if (to_string(static_cast<AuditEvent>(i)) == s) return static_cast<AuditEvent>(i);
    }
    throw std::invalid_argument("unknown audit event '" + std::string(s) + "'");
}

Bytes canonical_body(const AuditEntry& e) {
    Bytes out;
    ByteWriter w(out);
    w.u64(e.seq);
    w.u64(static_cast<std::uint64_t>(e.timestamp_us));
    w.str16(e.session);
    w.u8(static_cast<std::uint8_t>(e.event));
    w.u64(e.ref);
    w.u64(static_cast<std::uint64_t>(e.expires_at_us));
    w.str16(e.detail);
    return out;
}

Digest chain_digest(const Digest& prev, const AuditEntry& e) {
    const Bytes body = canonical_body(e);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    Digest d{};
    unsigned int len = 0;
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    EVP_DigestUpdate(ctx, prev.data(), prev.size());
    EVP_DigestUpdate(ctx, body.data(), body.size());
    EVP_DigestFinal_ex(ctx, d.data(), &len);
    EVP_MD_CTX_free(ctx);
    return d;
}

AuditVerdict verify_audit(std::span<const AuditEntry> log) {
    Digest prev{};
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto& e = log[i];
        if (e.seq != i || chain_digest(prev, e) != e.digest) return {false, i};
        prev = e.digest;
    }
    return {};
}

const AuditEntry& AuditLog::append(Micros at, std::string session, AuditEvent event, std::uint64_t ref,
                                   Micros expires_at, std::string detail) {
    AuditEntry e;
    e.seq = entries_.size();
    e.timestamp_us = at;
    e.session = std::move(session);
    e.event = event;
    e.ref = ref;
    e.expires_at_us = expires_at;
    e.detail = std::move(detail);
    e.digest = chain_digest(entries_.empty() ? Digest{} : entries_.back().digest, e);
    entries_.push_back(std::move(e));
    return entries_.back();
}

Bytes encode_audit(std::span<const AuditEntry> log) {
    Bytes out = protocol::to_bytes("PTXA");
    ByteWriter w(out);
    w.u32(static_cast<std::uint32_t>(log.size()));
    for (const auto& e : log) {
        w.raw(canonical_body(e));
        w.raw(e.digest);
    }
    return out;
}

std::vector<AuditEntry> decode_audit(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const auto magic = r.raw(4);
    if (!std::equal(magic.begin(), magic.end(), "PTXA")) throw protocol::Truncated("not an audit export");
    const auto n = r.u32();
    std::vector<AuditEntry> out;
    for (std::uint32_t i = 0; i < n; ++i) {
        AuditEntry e;
        e.seq = r.u64();
        e.timestamp_us = static_cast<Micros>(r.u64());
        e.session = r.str16();
        const auto ev = r.u8();
        if (ev > 4) throw protocol::Truncated("unknown audit event " + std::to_string(ev));
        e.event = static_cast<AuditEvent>(ev);
        e.ref = r.u64();
        e.expires_at_us = static_cast<Micros>(r.u64());
        e.detail = r.str16();
        const auto d = r.raw(32);
        std::copy(d.begin(), d.end(), e.digest.begin());
        out.push_back(std::move(e));
    }
    if (r.remaining() != 0) throw protocol::Truncated("trailing bytes after audit export");
    return out;
}

json to_json(const AuditEntry& e) {
    return {{"seq", e.seq},
            {"timestamp_us", e.timestamp_us},
            {"session", e.session},
            {"event", to_string(e.event)},
            {"ref", e.ref},
            {"expires_at_us", e.expires_at_us},
            {"detail", e.detail},
            {"digest", protocol::to_hex(e.digest)}};
}

void write_audit_jsonl(std::ostream& out, std::span<const AuditEntry> log) {
    for (const auto& e : log) out << to_json(e).dump() << '\n';
}

std::vector<AuditEntry> read_audit_jsonl(std::istream& in) {
    std::vector<AuditEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        AuditEntry e;
        e.seq = j.at("seq").get<std::uint64_t>();
        e.timestamp_us = j.at("timestamp_us").get<Micros>();
        e.session = j.at("session").get<std::string>();
        e.event = audit_event_from_string(j.at("event").get<std::string>());
        e.ref = j.at("ref").get<std::uint64_t>();
        e.expires_at_us = j.at("expires_at_us").get<Micros>();
        e.detail = j.at("detail").get<std::string>();
        const auto d = protocol::from_hex(j.at("digest").get<std::string>());
        if (d.size() != e.digest.size()) throw std::invalid_argument("digest must be 32 bytes");
        std::copy(d.begin(), d.end(), e.digest.begin());
        out.push_back(std::move(e));
    }
    return out;
}

// --- jump host --------------------------------------------------------------

std::string_view to_string(RejectReason r) {
    switch (r) {
        case RejectReason::unauthenticated: return "unauthenticated";
        case RejectReason::session_expired: return "session_expired";
        case RejectReason::policy: return "policy";
        case RejectReason::integrity: return "integrity";
        case RejectReason::replay: return "replay";
        case RejectReason::malformed: return "malformed";
    }
    return "unknown";
}

JumpHost::JumpHost(OperatorRegistry registry, JumpHostConfig config, std::uint64_t seed)
    : registry_(std::move(registry)), config_(config), rng_(netemu::make_stream(seed, "jump-host/sessions")) {
    if (config_.session_ttl_us <= 0) throw ConfigError("session TTL must be positive");
    if (config_.tunnel_hop_us < 0) throw ConfigError("tunnel hop must be >= 0");
}

const Session& JumpHost::authenticate(std::string_view token, Micros now) {
    const Operator* op = registry_.find(token);
    if (op == nullptr) {
        audit_.append(now, kUnauthenticated, AuditEvent::auth_fail, 0, 0, "unknown token");
        throw AuthRejected("unknown token");
    }
    if (op->expires_at_us && now >= *op->expires_at_us) {
        audit_.append(now, kUnauthenticated, AuditEvent::auth_fail, 0, 0, "expired credentials: " + op->principal);
        throw AuthRejected("credentials expired");
    }
    SessionId id = 0;
    while (id == 0 || sessions_.contains(id)) id = rng_();
    Session s;
    s.id = id;
    s.principal = op->principal;
    s.issued_at = now;
    s.expires_at = now + config_.session_ttl_us;
    if (op->expires_at_us) s.expires_at = std::min(s.expires_at, *op->expires_at_us);
    s.allowed_ops = op->allowed_ops;
    s.key = protocol::derive_session_key(token, id);
    audit_.append(now, session_label(id), AuditEvent::auth_ok, 0, s.expires_at, op->principal);
    return sessions_.emplace(id, std::move(s)).first->second;
}

Bytes JumpHost::handle_auth(std::span<const std::uint8_t> payload, Micros now) {
    protocol::AuthReply reply;
    try {
        const auto& s = authenticate(protocol::decode_auth_request(payload), now);
        reply.status = protocol::AuthStatus::ok;
        reply.session = s.id;
        reply.expires_at_us = static_cast<std::uint64_t>(s.expires_at);
        reply.allowed_ops = s.allowed_ops;
    } catch (const protocol::Truncated&) {
        audit_.append(now, kUnauthenticated, AuditEvent::auth_fail, 0, 0, "malformed request");
    } catch (const AuthRejected&) {
    }
    return protocol::encode_auth_reply(reply);
}

const Session* JumpHost::session(SessionId id) const {
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : &it->second;
}

void JumpHost::reject(Micros now, const std::string& session, AuditEvent event, std::uint64_t ref, Micros expires,
                      RejectReason reason, const std::string& detail) {
    audit_.append(now, session, event, ref, expires, std::string(to_string(reason)) + ": " + detail);
    if (reason == RejectReason::session_expired) throw SessionExpired(detail);
    throw PolicyViolation(reason, detail);
}

protocol::SealedCommand JumpHost::tunnel_command(std::span<const std::uint8_t> payload, Micros now) {
    protocol::SealedCommand sealed;
    try {
        sealed = protocol::parse_sealed_command(payload);
    } catch (const std::exception& e) {
        reject(now, kUnauthenticated, AuditEvent::cmd_rejected, 0, 0, RejectReason::malformed, e.what());
    }
    const auto it = sessions_.find(sealed.session);
    if (it == sessions_.end()) {
        reject(now, kUnauthenticated, AuditEvent::cmd_rejected, sealed.command_id, 0, RejectReason::unauthenticated,
               "no such session");
    }
    const Session& s = it->second;
    const std::string label = session_label(s.id);
    if (!protocol::verify_command(s.key, sealed)) {
        reject(now, label, AuditEvent::cmd_rejected, sealed.command_id, s.expires_at, RejectReason::integrity,
               "tag mismatch");
    }
    if (!s.valid_at(now)) {
        reject(now, label, AuditEvent::session_expired, sealed.command_id, s.expires_at,
               RejectReason::session_expired, "session " + label + " expired");
    }
    if ((s.allowed_ops & protocol::op_bit(protocol::MsgType::command)) == 0) {
        reject(now, label, AuditEvent::cmd_rejected, sealed.command_id, s.expires_at, RejectReason::policy,
               "COMMAND not allowed for " + s.principal);
    }
    auto& last = last_command_[s.id];
    if (sealed.command_id <= last) {
        reject(now, label, AuditEvent::cmd_rejected, sealed.command_id, s.expires_at, RejectReason::replay,
               "command id " + std::to_string(sealed.command_id) + " not fresh");
    }
    try {
        protocol::validate(sealed.command, config_.caps);
    } catch (const protocol::InvalidCommand& e) {
        reject(now, label, AuditEvent::cmd_rejected, sealed.command_id, s.expires_at, RejectReason::policy, e.what());
    }
    last = sealed.command_id;
    audit_.append(now, label, AuditEvent::cmd_forwarded, sealed.command_id, s.expires_at, s.principal);
    return sealed;
}

// --- zero-bypass ------------------------------------------------------------

BypassReport check_zero_bypass(std::span<const AuditEntry> audit, std::span<const RobotReceipt> receipts) {
    BypassReport rep;
    rep.receipts = receipts.size();
    std::vector<bool> used(audit.size(), false);
    for (const auto& r : receipts) {
        const std::string label = session_label(r.session);
        bool found = false;
        for (std::size_t i = 0; i < audit.size() && !found; ++i) {
            const auto& e = audit[i];
            if (used[i] || e.event != AuditEvent::cmd_forwarded || e.session != label || e.ref != r.command_id) continue;
            if (e.timestamp_us > r.at || e.timestamp_us >= e.expires_at_us) continue;
            used[i] = true;
            found = true;
        }
        if (found) {
            ++rep.matched;
        } else {
            rep.violations.push_back("command " + std::to_string(r.command_id) + " of session " + label + " at " +
                                     std::to_string(r.at) + " us has no prior valid cmd_forwarded entry");
        }
    }
    return rep;
}

}  // namespace ptxlink::jumphost
