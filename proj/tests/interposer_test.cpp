#include <cstring>
#include <string>
#include <vector>

#include <doctest.h>

#include "upage/interposer.hpp"

using namespace upage;

namespace {

/// Descriptor with `nptrs` consecutive 8-byte pointer arguments.
KernelDescriptor ptr_desc(std::string name, std::uint32_t nptrs) {
    KernelDescriptor d;
    d.mangled_name = std::move(name);
    d.kernarg_segment_size = 8 * nptrs;
    for (std::uint32_t i = 0; i < nptrs; ++i)
        d.args.push_back({8 * i, 8, ValueKind::global_buffer_address});
    return d;
}

std::vector<std::byte> blob_of(std::initializer_list<const void*> ptrs) {
    std::vector<std::byte> blob(8 * ptrs.size());
    std::size_t at = 0;
    for (const void* p : ptrs) {
        std::uint64_t v = reinterpret_cast<std::uint64_t>(p);
        std::memcpy(blob.data() + at, &v, 8);
        at += 8;
    }
    return blob;
}

std::size_t count_events(const std::vector<TraceEvent>& events, EventKind kind,
                         RecordId record = 0) {
    std::size_t n = 0;
    for (const TraceEvent& e : events)
        if (e.kind == kind && (record == 0 || e.record == record)) ++n;
    return n;
}

const TraceEvent* find_event(const std::vector<TraceEvent>& events,
                             EventKind kind, RecordId record = 0) {
    for (const TraceEvent& e : events)
        if (e.kind == kind && (record == 0 || e.record == record)) return &e;
    return nullptr;
}

/// Clock delta paid by events[idx], i.e. its cost in the simulated timeline.
SimTime cost_at(const std::vector<TraceEvent>& events, std::size_t idx) {
    REQUIRE(idx < events.size());
    return events[idx].clock - (idx == 0 ? 0 : events[idx - 1].clock);
}

RecordId id_of(Interposer& ip, const void* ptr) {
    for (const auto& [id, base] : ip.live_allocations())
        if (base == ptr) return id;
    FAIL("pointer is not a live allocation");
    return 0;
}

}  // namespace

TEST_CASE("managed allocations round-trip through registry and trace") {
    InterposerConfig cfg;
    cfg.install_handler = false;
    Interposer ip(std::move(cfg));

    CHECK_THROWS_AS(ip.managed_alloc(0), Error);

    void* p = ip.managed_alloc(5000);
    REQUIRE(p != nullptr);
    CHECK(reinterpret_cast<std::uintptr_t>(p) % ip.model().page_size == 0);
    std::memset(p, 0x5a, 5000);  // host_valid, so directly writable

    RecordId id = id_of(ip, p);
    AllocationRecord& rec = ip.registry().find(id);
    CHECK(rec.req_len == 5000);
    CHECK(rec.len % ip.model().page_size == 0);
    CHECK(rec.scheme == SchemeKind::mirror);
    CHECK(rec.kind == MemKind::managed);
    CHECK(rec.state.load() == CoherenceState::host_valid);

    auto events = ip.sink().events();
    REQUIRE(events.size() == 1);
    CHECK(events[0].kind == EventKind::alloc);
    CHECK(events[0].record == id);
    CHECK(events[0].bytes == 5000);
    CHECK(events[0].label == "mirror");
    CHECK(events[0].clock == 0);  // allocation does not advance the clock

    ip.managed_free(p);
    CHECK(ip.live_allocations().empty());
    events = ip.sink().events();
    REQUIRE(events.size() == 2);
    CHECK(events[1].kind == EventKind::free_mem);
    CHECK(events[1].record == id);
    CHECK(events[1].bytes == 5000);

    CHECK_THROWS_AS(ip.managed_free(p), Error);  // double free
    int stack_var = 0;
    CHECK_THROWS_AS(ip.managed_free(&stack_var), Error);
}

TEST_CASE("K launches migrate each mirror dependency exactly once") {
    for (std::size_t launches : {1u, 2u, 10u, 100u}) {
        CAPTURE(launches);
        InterposerConfig cfg;
        cfg.install_handler = false;
        Interposer ip(std::move(cfg));

        auto image = emit_code_object({ptr_desc("touch_pair", 2)});
        ip.register_code_object(image.data(), image.size());
        static const int handle = 0;
        ip.register_function(&handle, "touch_pair");

        void* a = ip.managed_alloc(4096);
        void* b = ip.managed_alloc(4096);
        RecordId ra = id_of(ip, a);
        RecordId rb = id_of(ip, b);

        auto blob = blob_of({a, b});
        for (std::size_t i = 0; i < launches; ++i)
            ip.launch(&handle, blob.data(), blob.size(), 512);

        auto events = ip.sink().events();
        CHECK(count_events(events, EventKind::h2d, ra) == 1);
        CHECK(count_events(events, EventKind::h2d, rb) == 1);
        CHECK(count_events(events, EventKind::d2h) == 0);
        CHECK(count_events(events, EventKind::fault) == 0);
        CHECK(count_events(events, EventKind::launch) == launches);
        CHECK(find_event(events, EventKind::h2d, ra)->label == "migrate");

        AllocationRecord& rec = ip.registry().find(ra);
        CHECK(rec.state.load() == CoherenceState::device_valid);
        CHECK(rec.host_protected.load());

        // Freeing runs the release hook: unprotect plus shadow free.
        ip.managed_free(a);
        ip.managed_free(b);
        CHECK(ip.device().live_device_bytes() == 0);
    }
}

TEST_CASE("a host read between launches costs one write-back and one re-migration") {
    Interposer ip(InterposerConfig{});  // real fault handler
    auto image = emit_code_object({ptr_desc("touch_pair", 2)});
    ip.register_code_object(image.data(), image.size());
    static const int handle = 0;
    ip.register_function(&handle, "touch_pair");

    void* a = ip.managed_alloc(4096);
    void* b = ip.managed_alloc(4096);
    RecordId ra = id_of(ip, a);
    RecordId rb = id_of(ip, b);
    const std::uint64_t pattern = 0x1122334455667788ull;
    std::memcpy(a, &pattern, sizeof pattern);
    auto blob = blob_of({a, b});

    ip.launch(&handle, blob.data(), blob.size(), 512);

    // Plain host read of a device-valid mirror buffer: the page fault pages
    // the whole allocation back. Checking the value keeps the read live
    // under optimization and proves the write-back carried the bytes.
    std::uint64_t sample = 0;
    std::memcpy(&sample, a, sizeof sample);
    CHECK(sample == pattern);
    ip.sink().drain();

    ip.launch(&handle, blob.data(), blob.size(), 512);

    auto events = ip.sink().events();
    CHECK(count_events(events, EventKind::h2d, ra) == 2);
    CHECK(count_events(events, EventKind::d2h, ra) == 1);
    CHECK(count_events(events, EventKind::fault, ra) == 1);
    CHECK(count_events(events, EventKind::h2d, rb) == 1);
    CHECK(count_events(events, EventKind::d2h, rb) == 0);
    CHECK(ip.registry().find(ra).faults_served.load() == 1);

    // The write-back's stale shadow is drained by the second launch, which
    // then allocates a fresh one: exactly two live blocks remain.
    CHECK(ip.device().live_block_count() == 2);
}

TEST_CASE("device scheme falls back to mirror when the pool is exhausted") {
    InterposerConfig cfg;
    cfg.scheme = SchemeKind::device;
    cfg.model.capacity_bytes = 1 << 20;
    cfg.install_handler = false;
    Interposer ip(std::move(cfg));

    void* a = ip.managed_alloc(600 * 1024);
    RecordId ra = id_of(ip, a);
    CHECK(ip.registry().find(ra).scheme == SchemeKind::device);
    CHECK(ip.registry().find(ra).kind == MemKind::device_local);
    CHECK(ip.registry().find(ra).state.load() == CoherenceState::device_valid);

    void* b = ip.managed_alloc(600 * 1024);  // does not fit next to a
    RecordId rb = id_of(ip, b);
    AllocationRecord& rec_b = ip.registry().find(rb);
    CHECK(rec_b.scheme == SchemeKind::mirror);
    CHECK(rec_b.kind == MemKind::managed);
    CHECK(rec_b.state.load() == CoherenceState::host_valid);

    auto events = ip.sink().events();
    REQUIRE(events.size() == 3);
    CHECK(events[0].label == "device");
    CHECK(events[1].kind == EventKind::warning);
    CHECK(events[1].label == "device pool exhausted, allocation degraded to mirror");
    CHECK(events[1].record == rb);
    CHECK(events[2].kind == EventKind::alloc);
    CHECK(events[2].label == "mirror");

    // Degraded allocations still behave as plain mirror memory.
    std::memset(b, 1, 600 * 1024);
    ip.managed_free(b);
    ip.managed_free(a);
}

TEST_CASE("device scheme without fallback propagates the pool failure") {
    InterposerConfig cfg;
    cfg.scheme = SchemeKind::device;
    cfg.model.capacity_bytes = 1 << 20;
    cfg.fallback_on_device_oom = false;
    cfg.install_handler = false;
    Interposer ip(std::move(cfg));

    void* a = ip.managed_alloc(600 * 1024);
    CHECK_THROWS_AS(ip.managed_alloc(600 * 1024), DeviceAllocError);
    CHECK(ip.live_allocations().size() == 1);
    ip.managed_free(a);
    CHECK(ip.device().live_device_bytes() == 0);
}

TEST_CASE("launch migration is all-or-nothing under pool exhaustion") {
    InterposerConfig cfg;
    cfg.model.capacity_bytes = 1 << 20;
    cfg.install_handler = false;
    Interposer ip(std::move(cfg));

    auto image = emit_code_object(
        {ptr_desc("touch_pair", 2), ptr_desc("touch_one", 1)});
    ip.register_code_object(image.data(), image.size());
    static const int pair_handle = 0;
    static const int one_handle = 0;
    ip.register_function(&pair_handle, "touch_pair");
    ip.register_function(&one_handle, "touch_one");

    void* a = ip.managed_alloc(600 * 1024);
    void* b = ip.managed_alloc(600 * 1024);
    RecordId ra = id_of(ip, a);
    RecordId rb = id_of(ip, b);

    // Both dependencies cannot fit at once; the launch must fail before it
    // migrates anything.
    auto blob = blob_of({a, b});
    CHECK_THROWS_AS(ip.launch(&pair_handle, blob.data(), blob.size(), 1),
                    DeviceAllocError);

    auto events = ip.sink().events();
    CHECK(count_events(events, EventKind::h2d) == 0);
    CHECK(count_events(events, EventKind::launch) == 0);
    CHECK(ip.registry().find(ra).state.load() == CoherenceState::host_valid);
    CHECK(ip.registry().find(rb).state.load() == CoherenceState::host_valid);
    CHECK(!ip.registry().find(ra).host_protected.load());
    CHECK(ip.device().live_device_bytes() == 0);

    // The rolled-back pool still serves a launch that fits.
    auto one = blob_of({a});
    ip.launch(&one_handle, one.data(), one.size(), 1);
    events = ip.sink().events();
    CHECK(count_events(events, EventKind::h2d, ra) == 1);
    CHECK(count_events(events, EventKind::launch) == 1);
}

TEST_CASE("mirror launches hand the kernel rewritten device addresses") {
    Interposer ip(InterposerConfig{});  // real handler for the read-back
    auto image = emit_code_object({ptr_desc("poke", 1)});
    ip.register_code_object(image.data(), image.size());
    static const int handle = 0;
    ip.register_function(&handle, "poke");

    constexpr std::uint64_t kMagic = 0xfeedfacecafebeefull;
    std::uint64_t seen_addr = 0;
    SimKernel kernel;
    kernel.name = "poke";
    kernel.body = [&](const KernelCtx& ctx, const std::byte* blob, std::uint64_t) {
        std::uint64_t addr = 0;
        std::memcpy(&addr, blob, 8);
        seen_addr = addr;
        *ctx.as<std::uint64_t>(addr) = kMagic;
    };
    ip.add_kernel(kernel);

    void* p = ip.managed_alloc(8192);
    // The blob carries an interior pointer; the rewrite must preserve the
    // offset relative to the allocation base.
    auto blob = blob_of({static_cast<std::byte*>(p) + 256});
    auto before = blob;
    ip.launch(&handle, blob.data(), blob.size(), 1);

    CHECK(blob == before);  // caller's blob is never modified in place
    CHECK(seen_addr != reinterpret_cast<std::uint64_t>(p) + 256);
    CHECK(seen_addr == ip.registry().find(id_of(ip, p)).shadow.load() + 256);

    // Reading the app view faults, writes back, and surfaces the kernel's
    // store at the same interior offset.
    std::uint64_t got = 0;
    std::memcpy(&got, static_cast<std::byte*>(p) + 256, 8);
    CHECK(got == kMagic);
}

TEST_CASE("advise dependencies stay host-resident under the alignment quirk") {
    InterposerConfig cfg;
    cfg.scheme = SchemeKind::advise;
    cfg.install_handler = false;
    REQUIRE(cfg.model.quirk_advise_misalign);
    Interposer ip(std::move(cfg));

    auto image = emit_code_object({ptr_desc("touch_one", 1)});
    ip.register_code_object(image.data(), image.size());
    static const int handle = 0;
    ip.register_function(&handle, "touch_one");

    void* p = ip.managed_alloc(524288);
    RecordId id = id_of(ip, p);
    auto blob = blob_of({p});
    ip.launch(&handle, blob.data(), blob.size(), 1);

    auto events = ip.sink().events();
    CHECK(count_events(events, EventKind::h2d) == 0);
    CHECK(count_events(events, EventKind::prefetch) == 0);
    REQUIRE(events.size() == 4);  // alloc, ignored advise, ignored prefetch, launch
    CHECK(events[1].kind == EventKind::warning);
    CHECK(events[1].label == "advise ignored: allocation alignment unsupported by runtime");
    CHECK(events[2].kind == EventKind::warning);
    CHECK(events[2].label == "prefetch ignored: allocation alignment unsupported by runtime");
    CHECK(events[3].kind == EventKind::launch);

    AllocationRecord& rec = ip.registry().find(id);
    CHECK(rec.state.load() == CoherenceState::host_valid);
    CHECK(!rec.device_resident.load());

    // Ineffective advise means the launch pays interconnect bandwidth.
    CHECK(cost_at(events, 3) == ip.model().access_cost(524288, false));
}

TEST_CASE("advise residency follows prefetch and host access without the quirk") {
    InterposerConfig cfg;
    cfg.scheme = SchemeKind::advise;
    cfg.model.quirk_advise_misalign = false;
    cfg.install_handler = false;
    Interposer ip(std::move(cfg));

    auto image = emit_code_object({ptr_desc("touch_one", 1)});
    ip.register_code_object(image.data(), image.size());
    static const int handle = 0;
    ip.register_function(&handle, "touch_one");

    void* p = ip.managed_alloc(524288);
    RecordId id = id_of(ip, p);
    AllocationRecord& rec = ip.registry().find(id);
    auto blob = blob_of({p});

    ip.launch(&handle, blob.data(), blob.size(), 1);
    CHECK(rec.device_resident.load());

    auto events = ip.sink().events();
    REQUIRE(events.size() == 4);  // alloc, advise, prefetch, launch
    CHECK(events[1].kind == EventKind::advise);
    CHECK(events[2].kind == EventKind::prefetch);
    CHECK(events[2].label == "to_device");
    CHECK(events[2].bytes == 524288);
    CHECK(cost_at(events, 2) == ip.model().copy_cost(524288));
    // Resident dependency: the launch runs at device bandwidth.
    CHECK(cost_at(events, 3) == ip.model().access_cost(524288, true));

    // A host touch pages residency back at one transfer's cost.
    ip.note_host_read(p, 8);
    events = ip.sink().events();
    REQUIRE(events.size() == 5);
    CHECK(events[4].kind == EventKind::prefetch);
    CHECK(events[4].label == "to_host");
    CHECK(events[4].bytes == 524288);
    CHECK(!rec.device_resident.load());
}

TEST_CASE("passthrough launches pay interconnect bandwidth with no movement") {
    InterposerConfig cfg;
    cfg.scheme = SchemeKind::passthrough;
    cfg.install_handler = false;
    Interposer ip(std::move(cfg));

    auto image = emit_code_object({ptr_desc("touch_one", 1)});
    ip.register_code_object(image.data(), image.size());
    static const int handle = 0;
    ip.register_function(&handle, "touch_one");

    void* p = ip.managed_alloc(524288);
    auto blob = blob_of({p});
    ip.launch(&handle, blob.data(), blob.size(), 1);
    ip.launch(&handle, blob.data(), blob.size(), 1);

    auto events = ip.sink().events();
    REQUIRE(events.size() == 3);  // alloc + two launches
    CHECK(count_events(events, EventKind::h2d) == 0);
    CHECK(count_events(events, EventKind::d2h) == 0);
    CHECK(cost_at(events, 1) == ip.model().access_cost(524288, false));
    CHECK(cost_at(events, 2) == ip.model().access_cost(524288, false));
}

TEST_CASE("device scheme charges window traffic for host accesses") {
    InterposerConfig cfg;
    cfg.scheme = SchemeKind::device;
    cfg.install_handler = false;
    Interposer ip(std::move(cfg));

    void* p = ip.managed_alloc(4096);
    RecordId id = id_of(ip, p);

    // Device-local memory is host-visible: no protection, direct access.
    std::memset(p, 7, 4096);
    CHECK(!ip.registry().find(id).host_protected.load());

    ip.note_host_write(static_cast<std::byte*>(p) + 16, 32);
    ip.note_host_read(p, 1 << 20);  // clamps to the allocation's length
    ip.note_host_read(p, 0);        // zero-length touches are free

    auto events = ip.sink().events();
    REQUIRE(events.size() == 3);
    CHECK(events[1].kind == EventKind::h2d);
    CHECK(events[1].label == "bar");
    CHECK(events[1].bytes == 32);
    CHECK(cost_at(events, 1) == transfer_fs(32, ip.model().interconnect_bw_gbps));
    CHECK(events[2].kind == EventKind::d2h);
    CHECK(events[2].label == "bar");
    CHECK(events[2].bytes == 4096);
    // Window traffic has no per-op latency, unlike explicit copies.
    CHECK(cost_at(events, 2) == transfer_fs(4096, ip.model().interconnect_bw_gbps));
}

TEST_CASE("host access notifications ignore untracked addresses") {
    InterposerConfig cfg;
    cfg.install_handler = false;
    Interposer ip(std::move(cfg));

    int local[4] = {};
    ip.note_host_read(local, sizeof local);
    ip.note_host_write(local, sizeof local);
    CHECK(ip.sink().events().empty());
}

TEST_CASE("shutdown uninstalls the handler and is idempotent") {
    auto ip = std::make_unique<Interposer>(InterposerConfig{});
    CHECK(installed_fault_engine() == &ip->engine());
    ip->shutdown();
    CHECK(installed_fault_engine() == nullptr);
    ip->shutdown();  // second call is a no-op
    ip.reset();      // destructor tolerates an already shut down instance

    // A successor can claim the handler slot immediately.
    Interposer next(InterposerConfig{});
    CHECK(installed_fault_engine() == &next.engine());
}
