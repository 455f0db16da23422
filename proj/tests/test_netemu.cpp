#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "ptxlink/netemu/config.hpp"
#include "ptxlink/netemu/scheduler.hpp"
#include "ptxlink/netemu/topology.hpp"
#include "ptxlink/netemu/trace.hpp"

using namespace ptxlink::netemu;

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("scheduler runs events in time order, FIFO on ties") {
    Scheduler s;
    std::vector<int> order;
    s.schedule(20, [&] { order.push_back(3); });
    s.schedule(10, [&] { order.push_back(1); });
    s.schedule(10, [&] { order.push_back(2); });
    s.schedule(10, [&] {
        order.push_back(22);
        s.schedule(10, [&] { order.push_back(23); });
    });
    CHECK(s.run() == 5);
    CHECK(order == std::vector<int>{1, 2, 22, 23, 3});
    CHECK(s.now() == 20);
}

TEST_CASE("scheduler rejects the past, cancels, and run_until parks the clock") {
    Scheduler s;
    s.schedule(100, [] {});
    s.run();
    CHECK_THROWS_AS(s.schedule(50, [] {}), SchedulingInPast);
    int hits = 0;
    const auto id = s.schedule_after(10, [&] { ++hits; });
    CHECK(s.cancel(id));
    CHECK_FALSE(s.cancel(id));
    s.schedule_after(500, [&] { ++hits; });
    s.run_until(300);
    CHECK(s.now() == 300);
    CHECK(hits == 0);
    s.run_until(600);
    CHECK(hits == 1);
}

TEST_CASE("time conversions") {
    CHECK(from_ms(1.5) == 1'500);
    CHECK(from_seconds(2) == 2'000'000);
    CHECK(to_ms(2'500) == doctest::Approx(2.5));
}

TEST_CASE("base delay medians over 10 000 draws match each profile") {
    const auto profiles = ProfileSet::builtin();
    for (const auto& name : profiles.names()) {
        CAPTURE(name);
        const auto& p = profiles.at(name);
        auto rng = make_stream(42, "median/" + name);
        std::vector<double> v;
        for (int i = 0; i < 10'000; ++i) v.push_back(p.base_delay.sample(rng));
        CHECK(median_of(v) == doctest::Approx(p.base_delay.median_us).epsilon(0.05));
    }
}

TEST_CASE("sampled delays are at least 1 us and grow with size") {
    LinkProfile p = ProfileSet::builtin().at("lan");
    p.base_delay = {DelayFamily::constant, 0.0, 0.0};
    p.per_byte_us = 0.0;
    auto rng = make_stream(1, "x");
    CHECK(sample_delay(p, 10, rng) == 1);
    p.base_delay.median_us = 100;
    p.per_byte_us = 1.0;
    CHECK(sample_delay(p, 50, rng) == 150);
}

TEST_CASE("burst shares one base sample and accumulates serialization") {
    LinkProfile p = ProfileSet::builtin().at("5g_sa");
    Link l(p, 7);
    std::vector<Bytes> frames(5, Bytes(1'000, 0));
    const auto tx = l.transmit_burst(frames, 0);
    REQUIRE(tx.size() == 5);
    for (std::size_t i = 1; i < tx.size(); ++i) {
        CHECK(*tx[i].outcome.deliver_time > *tx[i - 1].outcome.deliver_time);
        CHECK(tx[i].tx_complete > tx[i - 1].tx_complete);
    }
}

TEST_CASE("loss, corruption and outages") {
    LinkProfile p = ProfileSet::builtin().at("lan");
    SUBCASE("certain loss") {
        p.loss_prob = 1.0;
        Link l(p, 1);
        const auto t = l.transmit_burst({Bytes(40, 1)}, 0);
        CHECK(t[0].outcome.status == DeliveryStatus::lost);
        CHECK_FALSE(t[0].outcome.deliver_time);
    }
    SUBCASE("certain corruption flips exactly one bit after the header") {
        p.corrupt_prob = 1.0;
        Link l(p, 1);
        const Bytes frame(64, 0);
        const auto t = l.transmit_burst({frame}, 0);
        CHECK(t[0].outcome.status == DeliveryStatus::corrupted);
        int flipped = 0;
        for (std::size_t i = 0; i < frame.size(); ++i) {
            const int bits = __builtin_popcount(t[0].bytes[i] ^ frame[i]);
            flipped += bits;
            if (bits) CHECK(i >= 24);
        }
        CHECK(flipped == 1);
    }
    SUBCASE("outage window") {
        Link l(p, 1);
        l.add_outage(1'000, 2'000);
        CHECK(l.down_at(1'500));
        CHECK_FALSE(l.down_at(2'000));
        CHECK(l.transmit_burst({Bytes(40)}, 1'200)[0].outcome.status == DeliveryStatus::lost);
        CHECK(l.transmit_burst({Bytes(40)}, 2'500)[0].outcome.status == DeliveryStatus::delivered);
        CHECK_THROWS(l.add_outage(5, 5));
    }
}

TEST_CASE("same seed, same outcomes; different domain, different stream") {
    const auto p = ProfileSet::builtin().at("lte");
    Link a(p, 9), b(p, 9);
    for (int i = 0; i < 50; ++i) CHECK(a.transmit_burst({Bytes(100)}, i)[0].outcome == b.transmit_burst({Bytes(100)}, i)[0].outcome);
    auto r1 = make_stream(9, "a");
    auto r2 = make_stream(9, "b");
    CHECK(r1() != r2());
}

TEST_CASE("profile overrides and validation") {
    auto set = ProfileSet::builtin();
    CHECK(set.contains("5G-SA"));
    set.merge_json({{"5g_sa", {{"loss_prob", 0.1}}}, {"custom", {{"median_ms", 12.0}, {"iqr_ratio", 0.1}}}});
    CHECK(set.at("5g_sa").loss_prob == doctest::Approx(0.1));
    CHECK(set.at("custom").base_delay.median_us == doctest::Approx(12'000));
    CHECK_THROWS_AS(set.merge_json({{"5g_sa", {{"loss_prob", 1.5}}}}), ConfigError);
    CHECK_THROWS(set.at("nope"));
}

TEST_CASE("deployments and aliases") {
    const auto d = DeploymentSet::builtin();
    CHECK(canonical_deployment_name("kubernetes") == "orchestrated");
    CHECK(canonical_deployment_name("docker") == "container");
    CHECK(d.at("k8s").name == d.at("orchestrated").name);
    CHECK(d.at("function").mean_ms == doctest::Approx(245.0));
    CHECK(d.at("container").transfer_scale > d.at("function").transfer_scale);
}

TEST_CASE("topology presets route around avoided media") {
    const auto t = build_topology("setup3");
    CHECK(t.connected());
    CHECK_NOTHROW(t.validate());
    const auto r = t.route("control_room", "robot");
    REQUIRE(r);
    CHECK(r->front().from == "control_room");
    CHECK(r->back().to == "robot");
    // Every shore path passes the jump host.
    bool via_jump = false;
    for (const auto& h : *r) via_jump = via_jump || h.to == "jump_host";
    CHECK(via_jump);

    const auto sat_only = t.route("control_room", "jump_host", {Medium::microwave});
    REQUIRE(sat_only);
    CHECK(sat_only->front().link->profile.medium == Medium::satellite);
    CHECK_FALSE(t.route("control_room", "jump_host", {Medium::microwave, Medium::satellite}));
    CHECK(t.shore_media().count(Medium::satellite));

    CHECK_THROWS_AS(build_topology("setup9"), UnknownPreset);
    CHECK(build_topology("setup1").shore_media().count(Medium::wired));
}

TEST_CASE("trace JSON-lines round trip") {
    std::vector<TraceRecord> recs{{"req", 1, 0, 1, 1400, {DeliveryStatus::delivered, 10, 90}},
                                  {"req", 1, 1, 1, 1400, {DeliveryStatus::lost, 11, std::nullopt}}};
    const nlohmann::json header = {{"mode", "experiment"}};
    std::stringstream ss(trace_jsonl(header, recs));
    const auto parsed = read_trace_jsonl(ss);
    CHECK(parsed.header == header);
    CHECK(parsed.records == recs);
}
