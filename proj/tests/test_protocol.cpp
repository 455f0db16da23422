#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "ptxlink/netemu/rng.hpp"
#include "ptxlink/protocol/bytes.hpp"
#include "ptxlink/protocol/command.hpp"
#include "ptxlink/protocol/frame.hpp"
#include "ptxlink/protocol/session.hpp"
#include "ptxlink/protocol/telemetry.hpp"

using namespace ptxlink;
using namespace ptxlink::protocol;

namespace {

// Reference CRC-32 (reflected 0xEDB88320), one bit at a time.
std::uint32_t bitwise_crc32(std::span<const std::uint8_t> data) {
    std::uint32_t crc = 0xFFFFFFFFu;
    for (auto byte : data) {
        crc ^= byte;
        for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
    }
    return ~crc;
}

nlohmann::json golden() {
    std::ifstream in(PTXLINK_GOLDEN_DIR "/frames.json");
    REQUIRE(in);
    return nlohmann::json::parse(in);
}

Bytes random_bytes(netemu::Rng& rng, std::size_t n) {
    Bytes b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    return b;
}

}  // namespace

TEST_CASE("crc32 matches the bitwise reference") {
    CHECK(crc32_ieee(to_bytes("123456789")) == 0xCBF43926u);
    auto rng = netemu::make_stream(1, "crc");
    for (int i = 0; i < 200; ++i) {
        const auto b = random_bytes(rng, rng() % 3000);
        CHECK(crc32_ieee(b) == bitwise_crc32(b));
    }
}

TEST_CASE("golden frame vectors are bit-exact") {
    for (const auto& v : golden()) {
        CAPTURE(v.at("name").get<std::string>());
        const auto wire = from_hex(v.at("wire_hex").get<std::string>());
        const auto payload = from_hex(v.at("payload_hex").get<std::string>());
        const auto enc = encode_frame(static_cast<MsgType>(v.at("type").get<int>()), v.at("seq").get<std::uint32_t>(),
                                      v.at("timestamp_us").get<std::uint64_t>(), payload,
                                      v.at("flags").get<std::uint16_t>());
        CHECK(enc == wire);

        // Trailer is the reference CRC over header and payload.
        const std::span<const std::uint8_t> body(wire.data(), wire.size() - 4);
        const std::uint32_t trailer = std::uint32_t(wire[wire.size() - 4]) << 24 |
                                      std::uint32_t(wire[wire.size() - 3]) << 16 |
                                      std::uint32_t(wire[wire.size() - 2]) << 8 | wire[wire.size() - 1];
        CHECK(trailer == bitwise_crc32(body));

        const auto d = decode_frame(wire);
        CHECK_FALSE(d.crc_failed);
        CHECK(d.consumed == wire.size());
        CHECK(d.frame.payload == payload);
        CHECK(d.frame.seq == v.at("seq").get<std::uint32_t>());
        CHECK(d.frame.timestamp_us == v.at("timestamp_us").get<std::uint64_t>());
        CHECK(d.frame.retransmission() == (v.at("flags").get<int>() & 1));
    }
}

TEST_CASE("frame round trip over random frames") {
    auto rng = netemu::make_stream(2, "frames");
    for (int i = 0; i < 500; ++i) {
        Frame f;
        f.type = static_cast<MsgType>(1 + rng() % 5);
        f.flags = static_cast<std::uint16_t>(rng() & 1);
        f.seq = static_cast<std::uint32_t>(rng());
        f.timestamp_us = rng();
        f.payload = random_bytes(rng, rng() % 2000);
        const auto wire = encode_frame(f);
        CHECK(wire.size() == kFrameOverhead + f.payload.size());
        CHECK(peek_frame_length(wire) == wire.size());
        const auto d = decode_frame(wire);
        CHECK_FALSE(d.crc_failed);
        CHECK(d.frame == f);
    }
}

TEST_CASE("every single-bit flip after the header is caught by the CRC") {
    auto rng = netemu::make_stream(3, "flips");
    for (int i = 0; i < 40; ++i) {
        const auto wire = encode_frame(MsgType::telemetry, i, rng(), random_bytes(rng, 1 + rng() % 64));
        for (std::size_t byte = kHeaderSize; byte < wire.size(); ++byte) {
            for (int bit = 0; bit < 8; ++bit) {
                auto m = wire;
                m[byte] ^= static_cast<std::uint8_t>(1u << bit);
                CHECK(decode_frame(m).crc_failed);
            }
        }
    }
}

TEST_CASE("frame decode errors") {
    const auto wire = encode_frame(MsgType::command, 1, 2, Bytes{1, 2, 3});
    SUBCASE("truncated") {
        const Bytes cut(wire.begin(), wire.end() - 1);
        CHECK_THROWS_AS(decode_frame(cut), DecodeError);
        try {
            decode_frame(cut);
        } catch (const DecodeError& e) {
            CHECK(e.kind() == DecodeErrorKind::truncated);
        }
    }
    SUBCASE("bad magic") {
        auto m = wire;
        m[0] = 'X';
        try {
            decode_frame(m);
            FAIL("no throw");
        } catch (const DecodeError& e) {
            CHECK(e.kind() == DecodeErrorKind::bad_magic);
        }
    }
    SUBCASE("unsupported version") {
        auto m = wire;
        m[4] = 9;
        try {
            decode_frame(m);
            FAIL("no throw");
        } catch (const DecodeError& e) {
            CHECK(e.kind() == DecodeErrorKind::unsupported_version);
        }
    }
    SUBCASE("payload too large") {
        Bytes big(kMaxPayload + 1);
        CHECK_THROWS_AS(encode_frame(MsgType::telemetry, 0, 0, big), PayloadTooLarge);
    }
}

TEST_CASE("command encoding and caps") {
    const CommandMessage c{Gait::stairs, 0.25, -0.1, 0.5, 400};
    const auto body = encode_command(c);
    CHECK(body.size() == kCommandBodySize);
    CHECK(decode_command(body) == c);
    CHECK_NOTHROW(validate(c));
    CHECK_THROWS_AS(validate({Gait::walk, 2.0, 0, 0, 100}), InvalidCommand);
    CHECK_THROWS_AS(validate({Gait::walk, 0, 0, 0, 10'000}), InvalidCommand);
    CHECK(gait_from_string("stairs") == Gait::stairs);
}

TEST_CASE("sealed commands verify only under the session key") {
    const auto key = derive_session_key("tok", 77);
    const CommandMessage c{Gait::walk, 0.5, 0, 0, 100};
    const auto sealed = seal_command(key, 77, 3, c);
    CHECK(sealed.size() == kSealedCommandSize);
    const auto p = parse_sealed_command(sealed);
    CHECK(p.session == 77);
    CHECK(p.command_id == 3);
    CHECK(p.command == c);
    CHECK(verify_command(key, p));
    CHECK_FALSE(verify_command(derive_session_key("tok", 78), p));
    CHECK_FALSE(verify_command(derive_session_key("other", 77), p));
    for (std::size_t i = 0; i < sealed.size(); ++i) {
        auto m = sealed;
        m[i] ^= 0x40;
        // Either the body no longer parses or the tag no longer matches.
        bool accepted = false;
        try {
            accepted = verify_command(key, parse_sealed_command(m));
        } catch (const std::exception&) {
        }
        CHECK_FALSE(accepted);
    }
}

TEST_CASE("auth handshake payloads") {
    CHECK(decode_auth_request(encode_auth_request("operator-token")) == "operator-token");
    const AuthReply r{AuthStatus::ok, 0x1234, 900'000'000, op_bit(MsgType::command)};
    const auto enc = encode_auth_reply(r);
    CHECK(is_auth_reply(enc));
    CHECK_FALSE(is_auth_reply(encode_auth_request("x")));
    CHECK(decode_auth_reply(enc) == r);

    SessionClient client("operator-token");
    CHECK_FALSE(client.established());
    client.accept_reply(enc);
    CHECK(client.established());
    CHECK(client.session() == 0x1234);
    const auto first = parse_sealed_command(client.seal({Gait::walk, 0.1, 0, 0, 50}));
    const auto second = parse_sealed_command(client.seal({Gait::walk, 0.1, 0, 0, 50}));
    CHECK(first.command_id == 1);
    CHECK(second.command_id == 2);
    CHECK(verify_command(derive_session_key("operator-token", 0x1234), second));

    SessionClient refused("bad");
    CHECK_THROWS_AS(refused.accept_reply(encode_auth_reply({})), AuthRejected);
}

TEST_CASE("command reply round trip") {
    CommandReply r{9, 4, ReplyStatus::rejected, "battery depleted", 1.5, -2.0, 0.3, 0.0, Gait::idle};
    CHECK(decode_command_reply(encode_command_reply(r)) == r);
}

TEST_CASE("telemetry records") {
    TelemetryRecord r{"robot", TelemetryKind::thermal, 123456, to_bytes(R"({"pipe_temp_C":85})")};
    const auto back = decode_telemetry(encode_telemetry(r));
    CHECK(back.source == r.source);
    CHECK(back.kind == r.kind);
    CHECK(back.timestamp_us == r.timestamp_us);
    CHECK(back.payload == r.payload);
    CHECK_THROWS_AS(decode_telemetry(Bytes{0, 5, 'a'}), Truncated);
    CHECK(telemetry_kind_from_string("image") == TelemetryKind::image);
}

TEST_CASE("image payload model") {
    PayloadModel m;
    auto rng = netemu::make_stream(42, "payload");
    double sum = 0;
    std::size_t smallest = SIZE_MAX;
    for (int i = 0; i < 1'760; ++i) {
        const auto s = m.sample(rng);
        sum += double(s);
        smallest = std::min(smallest, s);
    }
    CHECK(sum / 1'760 == doctest::Approx(222'800).epsilon(0.02));
    CHECK(smallest >= m.min_bytes);

    PayloadModel fixed;
    fixed.sigma_ratio = 0.0;
    for (int i = 0; i < 20; ++i) CHECK(fixed.sample(rng) == 222'800);

    PayloadModel bad;
    bad.sigma_ratio = -1;
    CHECK_THROWS(bad.validate());
    CHECK(synthetic_payload(100, 1) == synthetic_payload(100, 1));
    CHECK(synthetic_payload(100, 1).size() == 100);
}
