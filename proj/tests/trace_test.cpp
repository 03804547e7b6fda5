#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include <doctest.h>

#include "upage/trace.hpp"

using namespace upage;

TEST_CASE("clock formatting matches independently computed strings") {
    CHECK(format_clock(0) == "0.000000000000000");
    CHECK(format_clock(1) == "0.000000000000001");
    CHECK(format_clock(999) == "0.000000000000999");
    CHECK(format_clock(1000000000000000ull) == "1.000000000000000");
    CHECK(format_clock(1234567890123456789ull) == "1234.567890123456789");
    CHECK(format_clock(999999999999999999ull) == "999.999999999999999");
    CHECK(format_clock(20480000000ull) == "0.000020480000000");
}

TEST_CASE("clock parsing inverts formatting exactly") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 10000; ++i) {
        SimTime t = rng() >> (i % 24);  // cover small and huge magnitudes
        CHECK(parse_clock(format_clock(t)) == t);
    }
    CHECK(parse_clock("0.000000000000000") == 0);
    CHECK(parse_clock("1234.567890123456789") == 1234567890123456789ull);
}

TEST_CASE("clock parsing rejects malformed strings") {
    CHECK_THROWS_AS(parse_clock(""), Error);
    CHECK_THROWS_AS(parse_clock("abc"), Error);
    CHECK_THROWS_AS(parse_clock("1.23"), Error);
    CHECK_THROWS_AS(parse_clock("1.0000000000000000"), Error);  // 16 digits
    CHECK_THROWS_AS(parse_clock(".000000000000001"), Error);
    CHECK_THROWS_AS(parse_clock("1,000000000000000"), Error);
}

TEST_CASE("transfer arithmetic reproduces hand-computed femtoseconds") {
    // bytes * 1e6 / gbps, rounded to nearest integer femtosecond.
    CHECK(transfer_fs(25165824, 1228.8) == 20480000000ull);
    CHECK(transfer_fs(25165824, 31.5) == 798915047619ull);
    CHECK(transfer_fs(524288, 31.5) == 16644063492ull);
    CHECK(transfer_fs(1048576, 31.5) == 33288126984ull);
    CHECK(transfer_fs(0, 31.5) == 0);
    CHECK(transfer_fs(1, 1000.0) == 1000);
}

TEST_CASE("sink stamps events with a cumulative clock in sequence order") {
    TraceSink sink;
    sink.emit(EventKind::alloc, 1, 64, "mirror");
    sink.emit(EventKind::h2d, 1, 64, "migrate", 5);
    sink.emit(EventKind::launch, 0, 64, "k", 0);
    sink.emit(EventKind::d2h, 1, 64, "migrate", 7);

    auto events = sink.events();
    REQUIRE(events.size() == 4);
    for (std::size_t i = 0; i < events.size(); ++i)
        CHECK(events[i].seq == i + 1);
    CHECK(events[0].clock == 0);
    CHECK(events[1].clock == 5);
    CHECK(events[2].clock == 5);
    CHECK(events[3].clock == 12);
    CHECK(sink.now() == 12);
}

TEST_CASE("fault-path emission lands in the ordinary log after a drain") {
    TraceSink sink;
    sink.emit(EventKind::alloc, 1, 32, "mirror");
    CHECK(sink.emit_from_fault(EventKind::fault, 1, 0, "host_access"));
    CHECK(sink.emit_from_fault(EventKind::d2h, 1, 32, "migrate", 9));
    sink.emit(EventKind::free_mem, 1, 32, "");

    auto events = sink.events();
    REQUIRE(events.size() == 4);
    CHECK(events[1].kind == EventKind::fault);
    CHECK(events[1].label == "host_access");
    CHECK(events[2].kind == EventKind::d2h);
    CHECK(events[2].clock == 9);
    CHECK(events[3].clock == 9);
    CHECK(!sink.overflowed());
}

TEST_CASE("concurrent emitters never tear the (seq, clock) pairing") {
    TraceSink sink;
    constexpr int kThreads = 8;
    constexpr int kPerThread = 500;
    std::vector<std::thread> threads;
    threads.reserve(kThreads);
    for (int t = 0; t < kThreads; ++t) {
        threads.emplace_back([&sink] {
            for (int i = 0; i < kPerThread; ++i)
                sink.emit(EventKind::launch, 0, 8, "k", 3);
        });
    }
    for (auto& th : threads) th.join();

    auto events = sink.events();
    REQUIRE(events.size() == kThreads * kPerThread);
    // seq is dense from 1 and the clock advances by exactly 3 per event, so
    // a torn stamp would show up as a mismatched pair.
    for (std::size_t i = 0; i < events.size(); ++i) {
        CHECK(events[i].seq == i + 1);
        CHECK(events[i].clock == 3 * (i + 1));
    }
}

TEST_CASE("jsonl round-trips every field including escaped labels") {
    TraceSink sink;
    sink.emit(EventKind::alloc, 3, 4096, "mirror");
    sink.emit(EventKind::warning, 0, 0, "quote \" backslash \\ tab \t");
    sink.emit(EventKind::launch, 0, 123, "kern_name", 42);
    auto events = sink.events();

    std::stringstream buf;
    write_jsonl(buf, events);
    auto parsed = read_jsonl(buf);
    CHECK(parsed == events);
}

TEST_CASE("jsonl reader rejects garbage") {
    std::stringstream buf("{\"seq\":1");
    CHECK_THROWS_AS(read_jsonl(buf), Error);
    std::stringstream buf2("not json at all\n");
    CHECK_THROWS_AS(read_jsonl(buf2), Error);
}
