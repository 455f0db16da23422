#include <doctest.h>

#include <algorithm>
#include <sstream>
#include <thread>

#include "ptxlink/aggregation/aggregation.hpp"
#include "ptxlink/netemu/config.hpp"

using namespace ptxlink;
using namespace ptxlink::aggregation;
using protocol::Bytes;

namespace {

TelemetryRecord rec(std::string source, TelemetryKind kind, Micros ts, std::string body = "{}") {
    return {std::move(source), kind, ts, protocol::to_bytes(body)};
}

netemu::LinkProfile constant_link(double one_way_us) {
    auto p = netemu::ProfileSet::builtin().at("lan");
    p.base_delay = {netemu::DelayFamily::constant, one_way_us, 0.0};
    p.per_byte_us = 0.0;
    return p;
}

}  // namespace

TEST_CASE("log query matches a brute-force scan") {
    TelemetryLog log;
    auto rng = netemu::make_stream(8, "log");
    const std::vector<std::string> sources{"robot", "sensor_a", "sensor_b"};
    std::vector<TelemetryRecord> all;
    for (int i = 0; i < 3'000; ++i) {
        auto r = rec(sources[rng() % 3], static_cast<TelemetryKind>(1 + rng() % 6), Micros(rng() % 10'000));
        all.push_back(r);
        CHECK(log.ingest(r, 0) == std::uint64_t(i));
    }
    for (int q = 0; q < 200; ++q) {
        Micros t0 = Micros(rng() % 10'000), t1 = Micros(rng() % 10'000);
        if (t0 > t1) std::swap(t0, t1);
        QueryFilter f;
        if (rng() % 2) f.source = sources[rng() % 3];
        if (rng() % 2) f.kind = static_cast<TelemetryKind>(1 + rng() % 6);

        std::vector<std::pair<Micros, std::uint64_t>> expect;
        for (std::size_t i = 0; i < all.size(); ++i) {
            if (all[i].timestamp_us >= t0 && all[i].timestamp_us <= t1 && f.matches(all[i]))
                expect.emplace_back(all[i].timestamp_us, i);
        }
        std::sort(expect.begin(), expect.end());
        const auto got = log.query(t0, t1, f);
        REQUIRE(got.size() == expect.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].offset == expect[i].second);
    }
    CHECK_THROWS_AS(log.query(5, 4), InvalidRange);
}

TEST_CASE("bounded log refuses writes beyond capacity") {
    TelemetryLog log(3);
    for (int i = 0; i < 3; ++i) log.ingest(rec("r", TelemetryKind::pose, i), i);
    CHECK_THROWS_AS(log.ingest(rec("r", TelemetryKind::pose, 4), 4), StorageFull);
    CHECK(log.size() == 3);
}

TEST_CASE("log keeps duplicates and ingest latency") {
    TelemetryLog log;
    const auto r = rec("r", TelemetryKind::pose, 100);
    log.ingest(r, 250);
    log.ingest(r, 400);
    CHECK(log.size() == 2);
    CHECK(log.ingest_latencies_us() == std::vector<Micros>{150, 300});
}

TEST_CASE("snapshots are stable while the writer appends") {
    TelemetryLog log;
    for (int i = 0; i < 10; ++i) log.ingest(rec("r", TelemetryKind::pose, i), i);
    const auto snap = log.snapshot();
    for (int i = 0; i < 2'000; ++i) log.ingest(rec("r", TelemetryKind::pose, i), i);
    CHECK(snap.size() == 10);
    CHECK(snap[9].offset == 9);
    CHECK(log.snapshot().size() == 2'010);
}

TEST_CASE("concurrent readers see consistent prefixes") {
    TelemetryLog log;
    constexpr int n = 20'000;
    std::thread writer([&] {
        for (int i = 0; i < n; ++i) log.ingest(rec("r", TelemetryKind::pose, i), i);
    });
    bool ok = true;
    std::thread reader([&] {
        std::size_t last = 0;
        while (last < std::size_t(n)) {
            const auto s = log.snapshot();
            if (s.size() < last) ok = false;
            if (!s.empty() && s[s.size() - 1].offset != s.size() - 1) ok = false;
            last = s.size();
        }
    });
    writer.join();
    reader.join();
    CHECK(ok);
    CHECK(log.query(0, n).size() == std::size_t(n));
}

TEST_CASE("snapshot JSON-lines round trip") {
    TelemetryLog log;
    log.ingest(rec("robot", TelemetryKind::thermal, 10, R"({"pipe_temp_C":81.5})"), 12);
    log.ingest({"robot", TelemetryKind::image, 20, Bytes{0, 1, 2, 255, 254}}, 30);
    std::stringstream ss;
    write_snapshot_jsonl(ss, log.snapshot());
    const auto back = read_snapshot_jsonl(ss);
    REQUIRE(back.size() == 2);
    CHECK(back[0] == log.snapshot()[0]);
    CHECK(back[1] == log.snapshot()[1]);
    CHECK(base64_decode(base64_encode(Bytes{'a', 'b', 'c', 'd'})) == Bytes{'a', 'b', 'c', 'd'});
}

TEST_CASE("threshold rule raises one alarm with the observed value") {
    const auto rules = rules_from_json(nlohmann::json::parse(
        R"([{"id":"hot","kind":"thermal","field":"pipe_temp_C","op":">","threshold":80}])"));
    RuleEngine engine(rules);
    CHECK(engine.evaluate(rec("robot", TelemetryKind::thermal, 5, R"({"pipe_temp_C":79})")).empty());
    const auto alarms = engine.evaluate(rec("robot", TelemetryKind::thermal, 6, R"({"pipe_temp_C":85})"));
    REQUIRE(alarms.size() == 1);
    CHECK(alarms[0] == Alarm{"hot", "robot", 6, 85.0});
    // Other kinds are not evaluated; missing channels are counted.
    CHECK(engine.evaluate(rec("robot", TelemetryKind::audio, 7, R"({"pipe_temp_C":99})")).empty());
    CHECK(engine.evaluate(rec("robot", TelemetryKind::thermal, 8, R"({"x":1})")).empty());
    CHECK(engine.skipped() == 1);
    CHECK(to_json(alarms[0]).at("observed") == 85.0);
}

TEST_CASE("delta rule compares readings within the window per source") {
    RuleEngine engine({{"jump", std::nullopt, "sound_level_dB", RuleOp::abs_delta_greater, 10.0, 2.0}});
    CHECK(engine.evaluate(rec("a", TelemetryKind::audio, 0, R"({"sound_level_dB":60})")).empty());
    CHECK(engine.evaluate(rec("b", TelemetryKind::audio, 1, R"({"sound_level_dB":90})")).empty());
    const auto hit = engine.evaluate(rec("a", TelemetryKind::audio, 1'000'000, R"({"sound_level_dB":75})"));
    REQUIRE(hit.size() == 1);
    CHECK(hit[0].observed == doctest::Approx(15.0));
    // Outside the window: no comparison.
    CHECK(engine.evaluate(rec("a", TelemetryKind::audio, 9'000'000, R"({"sound_level_dB":20})")).empty());
}

TEST_CASE("rule files are validated") {
    CHECK_THROWS_AS(rules_from_json(nlohmann::json::parse(R"([{"id":"x","field":"f","op":"~","threshold":1}])")),
                    netemu::ConfigError);
    CHECK_THROWS_AS(rules_from_json(nlohmann::json::parse(R"([{"id":"x","op":">","threshold":1}])")),
                    netemu::ConfigError);
    CHECK_THROWS_AS(load_rules("/nonexistent/rules.json"), netemu::ConfigError);
    CHECK(rule_op_from_string(to_string(RuleOp::less)) == RuleOp::less);
}

TEST_CASE("batch encoding round trip") {
    std::vector<TelemetryRecord> batch{rec("a", TelemetryKind::pose, 1, R"({"x":1})"),
                                       {"b", TelemetryKind::image, 2, Bytes(5'000, 7)}};
    const auto back = decode_batch(encode_batch(batch));
    REQUIRE(back.size() == 2);
    CHECK(back[1].payload == batch[1].payload);
    CHECK(back[0].source == "a");
    auto cut = encode_batch(batch);
    cut.pop_back();
    CHECK_THROWS(decode_batch(cut));
}

TEST_CASE("forwarder rides out a 60 s outage and delivers every record exactly once") {
    netemu::Scheduler sched;
    netemu::Link up(constant_link(20'000), 1), down(constant_link(20'000), 2);
    up.add_outage(1'000'000, 61'000'000);
    TwinEndpoint twin;
    protocol::ArqConfig arq;
    arq.window = 4;
    protocol::ArqChannel ch(sched, netemu::LinkPath({&up}), netemu::LinkPath({&down}), arq, "fwd",
                            [&](const protocol::Frame& f) { twin.deliver(f); });
    TelemetryLog log;
    ForwarderConfig cfg;
    cfg.batch_records = 10;
    cfg.batch_interval_us = 2'000'000;
    Forwarder fwd(sched, log, ch, cfg);
    for (int i = 0; i < 100; ++i) {
        sched.schedule(Micros(i) * 500'000, [&, i] {
            log.ingest(rec("robot", TelemetryKind::pose, Micros(i) * 500'000, "{\"i\":" + std::to_string(i) + "}"),
                       sched.now());
        });
    }
    fwd.start();
    sched.run_until(120'000'000);
    fwd.flush();
    fwd.stop();
    sched.run_until(200'000'000);

    CHECK(fwd.retained_events() > 0);
    CHECK(fwd.drained());
    REQUIRE(twin.received().size() == 100);
    for (int i = 0; i < 100; ++i) CHECK(twin.received()[i].timestamp_us == Micros(i) * 500'000);
}

TEST_CASE("twin merges two sources by timestamp") {
    TwinEndpoint twin;
    auto deliver = [&](std::vector<TelemetryRecord> b) {
        twin.deliver({protocol::MsgType::telemetry, 0, 0, 0, encode_batch(b)});
    };
    deliver({rec("a", TelemetryKind::pose, 10), rec("a", TelemetryKind::pose, 30)});
    deliver({rec("b", TelemetryKind::pose, 20), rec("b", TelemetryKind::pose, 30)});
    const auto m = twin.merged();
    REQUIRE(m.size() == 4);
    CHECK(m[0].timestamp_us == 10);
    CHECK(m[1].source == "b");
    CHECK(m[2].source == "a");  // arrival order breaks the tie
    CHECK(m[3].source == "b");
    CHECK(twin.batches() == 2);
}

TEST_CASE("range transfer jobs") {
    netemu::Scheduler sched;
    netemu::Link up(constant_link(1'000), 1), down(constant_link(1'000), 2);
    TwinEndpoint twin;
    protocol::ArqChannel ch(sched, netemu::LinkPath({&up}), netemu::LinkPath({&down}), {}, "job",
                            [&](const protocol::Frame& f) { twin.deliver(f); });
    TelemetryLog log;
    for (int i = 0; i < 25; ++i) log.ingest(rec(i % 2 ? "a" : "b", TelemetryKind::pose, i), i);
    ForwarderConfig cfg;
    cfg.batch_records = 5;
    Forwarder fwd(sched, log, ch, cfg);
    QueryFilter f;
    f.source = "a";
    CHECK(fwd.forward_range(0, 19, f) == 2);
    sched.run();
    CHECK(twin.received().size() == 10);
}
