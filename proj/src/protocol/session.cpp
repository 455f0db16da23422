#include "ptxlink/protocol/session.hpp"

#include <algorithm>
#include <cstring>

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

namespace ptxlink::protocol {

namespace {

constexpr std::uint8_t kAuthRequest = 1;
constexpr std::uint8_t kAuthReply = 2;

std::array<std::uint8_t, 32> hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> msg) {
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), msg.data(), msg.size(), out.data(), &len);
    return out;
}

}  // namespace

SessionKey derive_session_key(std::string_view token, SessionId session) {
    Bytes msg = to_bytes("ptxlink-session");
    ByteWriter(msg).u64(session);
    const auto key = std::span(reinterpret_cast<const std::uint8_t*>(token.data()), token.size());
    return hmac_sha256(key, msg);
}

Bytes encode_auth_request(std::string_view token) {
    Bytes out;
    ByteWriter w(out);
    w.u8(kAuthRequest);
    w.str16(token);
    return out;
}

std::string decode_auth_request(std::span<const std::uint8_t> payload) {
    ByteReader r(payload);
    if (r.u8() != kAuthRequest) throw Truncated("not an AUTH request");
    return r.str16();
}

bool is_auth_reply(std::span<const std::uint8_t> payload) { return !payload.empty() && payload[0] == kAuthReply; }

Bytes encode_auth_reply(const AuthReply& reply) {
    Bytes out;
    ByteWriter w(out);
    w.u8(kAuthReply);
    w.u8(static_cast<std::uint8_t>(reply.status));
    w.u64(reply.session);
    w.u64(reply.expires_at_us);
    w.u32(reply.allowed_ops);
    return out;
}

AuthReply decode_auth_reply(std::span<const std::uint8_t> payload) {
    ByteReader r(payload);
    if (r.u8() != kAuthReply) throw Truncated("not an AUTH reply");
    AuthReply a;
    a.status = r.u8() == 0 ? AuthStatus::ok : AuthStatus::rejected;
    a.session = r.u64();
    a.expires_at_us = r.u64();
    a.allowed_ops = r.u32();
    return a;
}

CommandTag command_tag(const SessionKey& key, SessionId session, std::uint32_t command_id,
                       const CommandMessage& command) {
    Bytes msg;
    ByteWriter w(msg);
    w.u64(session);
    w.u32(command_id);
    w.raw(encode_command(command));
    const auto mac = hmac_sha256(key, msg);
    CommandTag tag{};
    std::copy_n(mac.begin(), tag.size(), tag.begin());
    return tag;
}

Bytes seal_command(const SessionKey& key, SessionId session, std::uint32_t command_id, const CommandMessage& command) {
    Bytes out;
    out.reserve(kSealedCommandSize);
    ByteWriter w(out);
    w.u64(session);
    w.u32(command_id);
    w.raw(encode_command(command));
    w.raw(command_tag(key, session, command_id, command));
    return out;
}

SealedCommand parse_sealed_command(std::span<const std::uint8_t> payload) {
    ByteReader r(payload);
    SealedCommand s;
    s.session = r.u64();
    s.command_id = r.u32();
    s.command = decode_command(r.raw(kCommandBodySize));
    const auto tag = r.raw(s.tag.size());
    std::copy(tag.begin(), tag.end(), s.tag.begin());
    return s;
}

bool verify_command(const SessionKey& key, const SealedCommand& sealed) {
    const auto expected = command_tag(key, sealed.session, sealed.command_id, sealed.command);
    return CRYPTO_memcmp(expected.data(), sealed.tag.data(), expected.size()) == 0;
}

void SessionClient::accept_reply(std::span<const std::uint8_t> payload) {
    const AuthReply reply = decode_auth_reply(payload);
    if (reply.status != AuthStatus::ok) {
        reply_.reset();
        throw AuthRejected("jump host rejected the credentials");
    }
    reply_ = reply;
    key_ = derive_session_key(token_, reply.session);
    next_command_id_ = 1;
}

SessionId SessionClient::session() const {
    if (!reply_) throw AuthRejected("no session established");
    return reply_->session;
}

std::uint64_t SessionClient::expires_at_us() const {
    if (!reply_) throw AuthRejected("no session established");
    return reply_->expires_at_us;
}

Bytes SessionClient::seal(const CommandMessage& command) {
    return seal_command(key_, session(), next_command_id_++, command);
}

Bytes encode_command_reply(const CommandReply& r) {
    Bytes out;
    ByteWriter w(out);
    w.u64(r.session);
    w.u32(r.command_id);
    w.u8(static_cast<std::uint8_t>(r.status));
    w.str16(r.reason);
    w.f64(r.x);
    w.f64(r.y);
    w.f64(r.heading);
    w.f64(r.battery);
    w.u8(static_cast<std::uint8_t>(r.gait));
    return out;
}

CommandReply decode_command_reply(std::span<const std::uint8_t> payload) {
    ByteReader rd(payload);
    CommandReply r;
    r.session = rd.u64();
    r.command_id = rd.u32();
    r.status = rd.u8() == 0 ? ReplyStatus::accepted : ReplyStatus::rejected;
    r.reason = rd.str16();
    r.x = rd.f64();
    r.y = rd.f64();
    r.heading = rd.f64();
    r.battery = rd.f64();
    r.gait = static_cast<Gait>(rd.u8());
    return r;
}

}  // namespace ptxlink::protocol
