#include <atomic>
#include <map>
#include <random>
#include <thread>
#include <vector>

#include <doctest.h>

#include "upage/registry.hpp"

using namespace upage;

namespace {

RegisterParams params(HostAddr base, std::uint64_t len) {
    RegisterParams p;
    p.base = base;
    p.len = len;
    p.kind = MemKind::managed;
    p.scheme = SchemeKind::mirror;
    return p;
}

}  // namespace

TEST_CASE("registering and looking up ranges") {
    Registry reg(4096);
    RecordId a = reg.register_range(params(0x100000, 8192));
    RecordId b = reg.register_range(params(0x200000, 4096));
    CHECK(a != b);
    CHECK(reg.live_count() == 2);

    CHECK(reg.lookup(0x100000) == a);
    CHECK(reg.lookup(0x100000 + 8191) == a);
    CHECK(reg.lookup(0x100000 + 8192) == std::nullopt);
    CHECK(reg.lookup(0x200000 + 17) == b);
    CHECK(reg.lookup(0x0) == std::nullopt);
    CHECK(reg.lookup(0x300000) == std::nullopt);

    AllocationRecord& rec = reg.find(a);
    CHECK(rec.base == 0x100000);
    CHECK(rec.len == 8192);
    CHECK_THROWS_AS(reg.find(9999), RegistryError);
}

TEST_CASE("invalid registrations are rejected") {
    Registry reg(4096);
    CHECK_THROWS_AS(reg.register_range(params(0x100000, 0)), RegistryError);
    CHECK_THROWS_AS(reg.register_range(params(0x100123, 4096)), RegistryError);

    reg.register_range(params(0x100000, 8192));
    // Overlap from either side and full containment.
    CHECK_THROWS_AS(reg.register_range(params(0x100000, 4096)), RegistryError);
    CHECK_THROWS_AS(reg.register_range(params(0x101000, 8192)), RegistryError);
    CHECK_THROWS_AS(reg.register_range(params(0x0ff000, 8192)), RegistryError);
    CHECK(reg.live_count() == 1);
}

TEST_CASE("unregister drops the range and fires the release hook") {
    Registry reg(4096);
    std::vector<RecordId> released;
    reg.set_release_hook([&](AllocationRecord& rec) { released.push_back(rec.id); });

    RecordId a = reg.register_range(params(0x100000, 4096));
    RecordId b = reg.register_range(params(0x200000, 4096));
    reg.unregister(a);
    CHECK(reg.lookup(0x100000) == std::nullopt);
    CHECK(reg.lookup(0x200000) == b);
    CHECK(released == std::vector<RecordId>{a});
    CHECK_THROWS_AS(reg.unregister(a), RegistryError);
    reg.unregister(b);
    CHECK(released == std::vector<RecordId>{a, b});
    CHECK(reg.live_count() == 0);
}

TEST_CASE("snapshot lookup agrees with a linear-scan oracle under churn") {
    Registry reg(4096);
    std::map<HostAddr, std::pair<std::uint64_t, RecordId>> oracle;  // base -> (len, id)
    std::mt19937_64 rng(11);

    auto oracle_find = [&](HostAddr addr) -> std::optional<RecordId> {
        for (const auto& [base, v] : oracle)
            if (addr >= base && addr < base + v.first) return v.second;
        return std::nullopt;
    };

    constexpr HostAddr kSlotBase = 0x10000000;
    constexpr std::uint64_t kSlotStride = 1 << 20;
    for (int step = 0; step < 10000; ++step) {
        std::uint64_t slot = rng() % 64;
        HostAddr base = kSlotBase + slot * kSlotStride;
        if (oracle.count(base)) {
            reg.unregister(oracle[base].second);
            oracle.erase(base);
        } else {
            std::uint64_t pages = 1 + rng() % 8;
            RecordId id = reg.register_range(params(base, pages * 4096));
            oracle[base] = {pages * 4096, id};
        }
        // Probe a mix of interior, boundary, and miss addresses.
        for (int probe = 0; probe < 4; ++probe) {
            HostAddr addr = kSlotBase + (rng() % (64 * kSlotStride));
            CHECK(reg.lookup(addr) == oracle_find(addr));
        }
        HostAddr edge = base + (rng() % (9 * 4096));
        CHECK(reg.lookup(edge) == oracle_find(edge));
    }
    CHECK(reg.live_count() == oracle.size());
}

TEST_CASE("live id listing matches what was registered") {
    Registry reg(4096);
    RecordId a = reg.register_range(params(0x100000, 4096));
    RecordId b = reg.register_range(params(0x200000, 4096));
    RecordId c = reg.register_range(params(0x300000, 4096));
    reg.unregister(b);
    auto ids = reg.live_ids();
    CHECK(ids == std::vector<RecordId>{a, c});
}

TEST_CASE("snapshot guards keep lookups coherent while ranges churn") {
    Registry reg(4096);
    constexpr HostAddr kBase = 0x40000000;
    std::atomic<bool> stop{false};
    std::atomic<std::uint64_t> hits{0}, misses{0};

    std::vector<std::thread> readers;
    for (int t = 0; t < 4; ++t) {
        readers.emplace_back([&] {
            std::mt19937_64 rng(t + 100);
            while (!stop.load(std::memory_order_relaxed)) {
                HostAddr addr = kBase + (rng() % 32) * 4096;
                auto id = reg.lookup(addr);
                if (id) {
                    // The record behind a hit must still be readable and
                    // actually contain the address.
                    AllocationRecord* rec = nullptr;
                    {
                        Registry::SnapshotGuard guard(reg);
                        rec = guard->find(addr);
                    }
                    if (rec) {
                        ++hits;
                        if (!rec->contains(addr)) {
                            misses = 1u << 31;  // poisoned: fail below
                            return;
                        }
                    }
                } else {
                    ++misses;
                }
            }
        });
    }

    std::mt19937_64 rng(42);
    std::vector<std::pair<HostAddr, RecordId>> live;
    for (int step = 0; step < 20000; ++step) {
        if (!live.empty() && rng() % 2 == 0) {
            std::size_t pick = rng() % live.size();
            reg.unregister(live[pick].second);
            live.erase(live.begin() + static_cast<std::ptrdiff_t>(pick));
        } else {
            HostAddr base = kBase + (rng() % 32) * 4096;
            bool taken = false;
            for (auto& [b, id] : live) taken |= (b == base);
            if (taken) continue;
            live.emplace_back(base, reg.register_range(params(base, 4096)));
        }
    }
    stop = true;
    for (auto& th : readers) th.join();
    CHECK(misses.load() < (1u << 31));
    CHECK(hits.load() + misses.load() > 0);
    for (auto& [b, id] : live) reg.unregister(id);
}
