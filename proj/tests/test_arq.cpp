#include <doctest.h>

#include "ptxlink/netemu/config.hpp"
#include "ptxlink/protocol/arq.hpp"

using namespace ptxlink;
using namespace ptxlink::protocol;
using netemu::Micros;

namespace {

netemu::LinkProfile constant_link(double one_way_us, double loss = 0.0, double corrupt = 0.0) {
    auto p = netemu::ProfileSet::builtin().at("lan");
    p.base_delay = {netemu::DelayFamily::constant, one_way_us, 0.0};
    p.per_byte_us = 0.0;
    p.loss_prob = loss;
    p.corrupt_prob = corrupt;
    return p;
}

struct Harness {
    netemu::Scheduler sched;
    netemu::Link fwd;
    netemu::Link rev;
    netemu::TraceLog trace;
    std::vector<Bytes> delivered;
    ArqChannel ch;

    Harness(netemu::LinkProfile f, netemu::LinkProfile r, ArqConfig cfg)
        : fwd(std::move(f), 1),
          rev(std::move(r), 2),
          ch(sched, netemu::LinkPath({&fwd}), netemu::LinkPath({&rev}), cfg, "t",
             [this](const Frame& fr) { delivered.push_back(fr.payload); }, &trace) {}
};

}  // namespace

TEST_CASE("lossless stop-and-wait delivers in order with one attempt each") {
    Harness h(constant_link(1'000), constant_link(1'000), {});
    std::vector<SendResult> done;
    for (std::uint8_t i = 0; i < 5; ++i)
        h.ch.send_reliable(MsgType::telemetry, Bytes{i}, [&](const SendResult& r) { done.push_back(r); });
    h.sched.run();
    REQUIRE(h.delivered.size() == 5);
    for (std::uint8_t i = 0; i < 5; ++i) CHECK(h.delivered[i] == Bytes{i});
    REQUIRE(done.size() == 5);
    for (const auto& r : done) {
        CHECK(r.delivered);
        CHECK(r.attempts == 1);
    }
    // Stop-and-wait: one round trip per frame.
    CHECK(done.back().at == 10'000);
    CHECK(h.ch.sender().tx_log().size() == 5);
}

TEST_CASE("certain loss raises DeliveryFailed after max_retries + 1 attempts") {
    ArqConfig cfg;
    cfg.max_retries = 3;
    Harness h(constant_link(1'000, 1.0), constant_link(1'000), cfg);
    try {
        h.ch.send_and_wait(MsgType::command, Bytes{9});
        FAIL("expected DeliveryFailed");
    } catch (const DeliveryFailed& e) {
        CHECK(e.attempts() == 4);
        CHECK(e.seq() == 0);
    }
    CHECK(h.ch.sender().tx_log().size() == 4);
    CHECK(h.ch.sender().stalled());
    CHECK(h.delivered.empty());
}

TEST_CASE("a stalled sender resumes with a fresh budget") {
    ArqConfig cfg;
    cfg.max_retries = 1;
    cfg.timeout_us = 5'000;
    Harness h(constant_link(1'000), constant_link(1'000), cfg);
    h.fwd.add_outage(0, 20'000);
    std::vector<SendResult> done;
    h.ch.send_reliable(MsgType::telemetry, Bytes{1}, [&](const SendResult& r) { done.push_back(r); });
    h.ch.send_reliable(MsgType::telemetry, Bytes{2}, [&](const SendResult& r) { done.push_back(r); });
    h.sched.run();
    REQUIRE(done.size() == 1);
    CHECK_FALSE(done[0].delivered);
    CHECK(h.ch.sender().stalled());
    CHECK(h.ch.sender().queued() == 1);  // nothing new while stalled

    h.sched.run_until(25'000);  // link back up
    h.ch.sender().resume();
    h.sched.run();
    REQUIRE(done.size() == 3);
    CHECK(done[1].delivered);
    CHECK(done[1].attempts == 1);
    CHECK(done[2].delivered);
    CHECK(h.delivered == std::vector<Bytes>{{1}, {2}});
}

TEST_CASE("a late ACK completes a failed sequence number") {
    ArqConfig cfg;
    cfg.max_retries = 0;
    cfg.timeout_us = 3'000;
    // Round trip 4 ms exceeds the fixed 3 ms timeout.
    Harness h(constant_link(2'000), constant_link(2'000), cfg);
    std::vector<SendResult> done;
    h.ch.send_reliable(MsgType::telemetry, Bytes{7}, [&](const SendResult& r) { done.push_back(r); });
    h.sched.run();
    REQUIRE(done.size() == 2);
    CHECK_FALSE(done[0].delivered);
    CHECK(done[1].delivered);
    CHECK(h.delivered.size() == 1);
    CHECK_FALSE(h.ch.sender().stalled());
}

TEST_CASE("corrupted frames are counted but never delivered") {
    ArqConfig cfg;
    cfg.max_retries = 2;
    Harness h(constant_link(1'000, 0.0, 1.0), constant_link(1'000), cfg);
    h.ch.send_reliable(MsgType::telemetry, Bytes{1, 2, 3});
    h.sched.run();
    CHECK(h.delivered.empty());
    const auto& rx = h.ch.receiver().rx_log();
    REQUIRE(rx.size() == 3);
    for (const auto& r : rx) CHECK_FALSE(r.intact);
}

TEST_CASE("duplicates from lost ACKs are suppressed") {
    ArqConfig cfg;
    cfg.max_retries = 10;
    cfg.timeout_us = 5'000;
    Harness h(constant_link(1'000), constant_link(1'000, 0.6), cfg);
    for (std::uint8_t i = 0; i < 30; ++i) h.ch.send_reliable(MsgType::telemetry, Bytes{i});
    h.sched.run();
    REQUIRE(h.delivered.size() == 30);
    for (std::uint8_t i = 0; i < 30; ++i) CHECK(h.delivered[i] == Bytes{i});
    std::size_t dups = 0;
    for (const auto& r : h.ch.receiver().rx_log()) dups += r.duplicate;
    CHECK(dups > 0);
}

TEST_CASE("adaptive timeout follows the measured round trip") {
    ArqConfig cfg;
    Harness h(constant_link(10'000), constant_link(10'000), cfg);
    for (std::uint8_t i = 0; i < 20; ++i) h.ch.send_reliable(MsgType::telemetry, Bytes{i});
    h.sched.run();
    CHECK(h.ch.sender().smoothed_rtt_us() == doctest::Approx(20'000).epsilon(0.01));
    CHECK(h.ch.sender().current_timeout() == doctest::Approx(60'000).epsilon(0.01));
}

TEST_CASE("corked frames leave as one burst") {
    ArqConfig cfg;
    cfg.window = 16;
    auto p = netemu::ProfileSet::builtin().at("5g_sa");
    Harness h(p, p, cfg);
    h.ch.sender().cork();
    for (std::uint8_t i = 0; i < 8; ++i) h.ch.send_reliable(MsgType::telemetry, Bytes(1'000, i));
    CHECK(h.trace.size() == 0);
    h.ch.sender().uncork();
    CHECK(h.trace.size() == 8);
    for (const auto& r : h.trace.records()) CHECK(r.outcome.send_time == 0);
    h.sched.run();
    CHECK(h.delivered.size() == 8);
}

TEST_CASE("window bounds outstanding frames") {
    ArqConfig cfg;
    cfg.window = 4;
    Harness h(constant_link(1'000), constant_link(1'000), cfg);
    for (std::uint8_t i = 0; i < 10; ++i) h.ch.send_reliable(MsgType::telemetry, Bytes{i});
    CHECK(h.ch.sender().outstanding() == 4);
    CHECK(h.ch.sender().queued() == 6);
    h.sched.run();
    CHECK(h.ch.sender().idle());
    CHECK(h.delivered.size() == 10);
}

TEST_CASE("transport acknowledgements") {
    const auto wire = encode_transport_ack(12, 34);
    const auto d = decode_frame(wire);
    CHECK(d.frame.type == MsgType::ack);
    CHECK(d.frame.seq == 12);
    CHECK(is_transport_ack(d.frame));
    Frame reply{MsgType::ack, 0, 1, 0, Bytes{1}};
    CHECK_FALSE(is_transport_ack(reply));
}
