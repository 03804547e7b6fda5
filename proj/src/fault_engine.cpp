#include "upage/fault_engine.hpp"

#include <cstring>
#include <sched.h>
#include <sys/mman.h>
#include <unistd.h>

namespace upage {
namespace {

FaultEngine* g_engine = nullptr;

// Everything here may run in a fault context: no allocation, no locks that
// non-fault code holds across a fault, no stdio.
[[noreturn]] void die(const char* msg) {
    ssize_t ignored = write(STDERR_FILENO, msg, std::strlen(msg));
    (void)ignored;
    ignored = write(STDERR_FILENO, "\n", 1);
    (void)ignored;
    abort();
}

void spin_step(int i) {
    if ((i & 15) == 15) sched_yield();
}

constexpr int kSpinBudget = 1 << 26;

}  // namespace

FaultEngine* installed_fault_engine() { return g_engine; }

HostMirrorBuffer HostMirrorBuffer::create(std::uint64_t len, std::uint64_t page_size) {
    if (len == 0) throw Error("cannot map a zero-length buffer");
    HostMirrorBuffer buf;
    buf.map_len = round_up(len, page_size);
    buf.fd = memfd_create("upage-managed", MFD_CLOEXEC);
    if (buf.fd < 0) throw Error("memfd_create failed");
    if (ftruncate(buf.fd, static_cast<off_t>(buf.map_len)) != 0) {
        close(buf.fd);
        throw Error("sizing the managed backing file failed");
    }
    void* app = mmap(nullptr, buf.map_len, PROT_READ | PROT_WRITE, MAP_SHARED,
                     buf.fd, 0);
    void* engine = app == MAP_FAILED
                       ? MAP_FAILED
                       : mmap(nullptr, buf.map_len, PROT_READ | PROT_WRITE,
                              MAP_SHARED, buf.fd, 0);
    if (app == MAP_FAILED || engine == MAP_FAILED) {
        if (app != MAP_FAILED) munmap(app, buf.map_len);
        close(buf.fd);
        throw Error("mapping managed memory failed");
    }
    buf.app_view = static_cast<std::byte*>(app);
    buf.engine_view = static_cast<std::byte*>(engine);
    return buf;
}

void HostMirrorBuffer::destroy() {
    if (app_view) munmap(app_view, map_len);
    if (engine_view) munmap(engine_view, map_len);
    if (fd >= 0) close(fd);
    app_view = engine_view = nullptr;
    fd = -1;
    map_len = 0;
}

FaultEngine::FaultEngine(Registry& registry, TraceSink& sink,
                         const DeviceModel& model)
    : registry_(registry),
      sink_(sink),
      write_back_latency_fs_(model.latency_fs()),
      interconnect_bw_gbps_(model.interconnect_bw_gbps) {}

FaultEngine::~FaultEngine() {
    if (installed_) uninstall();
}

void FaultEngine::install() {
    if (installed_) throw Error("fault handler already installed");
    if (g_engine) throw Error("another fault engine owns the signal path");
    struct sigaction sa {};
    sa.sa_flags = SA_SIGINFO;
    sigemptyset(&sa.sa_mask);
    sa.sa_sigaction = &FaultEngine::trampoline;
    if (sigaction(SIGSEGV, &sa, &previous_) != 0)
        throw Error("installing the access-violation handler failed");
    g_engine = this;
    installed_ = true;
}

void FaultEngine::uninstall() {
    if (!installed_) return;
    sigaction(SIGSEGV, &previous_, nullptr);
    g_engine = nullptr;
    installed_ = false;
}

void FaultEngine::trampoline(int sig, siginfo_t* info, void* ucontext) {
    FaultEngine* engine = g_engine;
    if (!engine) {
        signal(SIGSEGV, SIG_DFL);
        return;  // the retried access then takes the default path
    }
    HostAddr addr = reinterpret_cast<HostAddr>(info->si_addr);
    if (engine->handle_fault(addr) == FaultOutcome::migrated) return;
    engine->chain(sig, info, ucontext);
}

void FaultEngine::chain(int sig, siginfo_t* info, void* ucontext) {
    if ((previous_.sa_flags & SA_SIGINFO) && previous_.sa_sigaction) {
        previous_.sa_sigaction(sig, info, ucontext);
        return;
    }
    if (previous_.sa_handler != SIG_DFL && previous_.sa_handler != SIG_IGN &&
        previous_.sa_handler) {
        previous_.sa_handler(sig);
        return;
    }
    // No real predecessor: put the default disposition back and let the
    // retried access terminate the process the way it would have without us.
    sigaction(SIGSEGV, &previous_, nullptr);
    g_engine = nullptr;
}

void FaultEngine::protect(AllocationRecord& rec) {
    if (rec.kind != MemKind::managed)
        throw Error("cannot protect non-managed record " + std::to_string(rec.id));
    if (rec.scheme != SchemeKind::mirror)
        throw Error("protection applies only to the mirror scheme (record " +
                    std::to_string(rec.id) + ")");
    if (mprotect(reinterpret_cast<void*>(rec.base), rec.len, PROT_NONE) != 0)
        throw Error("revoking access on record " + std::to_string(rec.id) +
                    " failed; coherence cannot be guaranteed");
    rec.host_protected.store(true, std::memory_order_release);
}

void FaultEngine::unprotect(AllocationRecord& rec) {
    if (mprotect(reinterpret_cast<void*>(rec.base), rec.len,
                 PROT_READ | PROT_WRITE) != 0)
        throw Error("restoring access on record " + std::to_string(rec.id) +
                    " failed");
    rec.host_protected.store(false, std::memory_order_release);
}

FaultOutcome FaultEngine::handle_fault(HostAddr addr) {
    Registry::SnapshotGuard snap(registry_);
    AllocationRecord* rec = snap->find(addr);
    if (!rec) return FaultOutcome::not_ours;
    return write_back(*rec);
}

FaultOutcome FaultEngine::write_back(AllocationRecord& rec) {
    for (int spin = 0; spin < kSpinBudget; ++spin) {
        CoherenceState s = rec.state.load(std::memory_order_acquire);
        switch (s) {
            case CoherenceState::host_valid:
            case CoherenceState::both_valid:
                if (!rec.host_protected.load(std::memory_order_acquire))
                    return FaultOutcome::migrated;  // lost a benign race; retry access
                // A launch-side host-to-device migration is mid-flight; wait
                // for it to finish, then take the write-back path.
                spin_step(spin);
                continue;
            case CoherenceState::migrating_to_host:
                spin_step(spin);  // another thread is writing back
                continue;
            case CoherenceState::device_valid:
                break;
        }
        CoherenceState expected = CoherenceState::device_valid;
        if (!rec.state.compare_exchange_strong(expected,
                                               CoherenceState::migrating_to_host,
                                               std::memory_order_acq_rel))
            continue;

        std::byte* shadow_data = rec.shadow_data.load(std::memory_order_acquire);
        DeviceAddr shadow = rec.shadow.load(std::memory_order_acquire);
        if (!shadow_data || !shadow)
            die("fault engine: record is device-valid but has no shadow");

        sink_.emit_from_fault(EventKind::fault, rec.id, 0, "host_access", 0);
        std::memcpy(rec.engine_ptr(rec.base), shadow_data, rec.req_len);
        if (mprotect(reinterpret_cast<void*>(rec.base), rec.len,
                     PROT_READ | PROT_WRITE) != 0)
            die("fault engine: cannot restore host access after write-back");
        rec.host_protected.store(false, std::memory_order_release);

        rec.shadow.store(0, std::memory_order_release);
        rec.shadow_data.store(nullptr, std::memory_order_release);
        std::uint64_t slot = pending_head_.fetch_add(1, std::memory_order_acq_rel);
        if (slot - pending_tail_ >= kPendingCap)
            die("fault engine: pending shadow-free ring overflow");
        pending_[slot % kPendingCap].store(shadow, std::memory_order_release);

        rec.generation.fetch_add(1, std::memory_order_relaxed);
        rec.faults_served.fetch_add(1, std::memory_order_relaxed);
        write_backs_.fetch_add(1, std::memory_order_relaxed);

        sink_.emit_from_fault(
            EventKind::d2h, rec.id, rec.req_len, "migrate",
            write_back_latency_fs_ + transfer_fs(rec.req_len, interconnect_bw_gbps_));
        rec.state.store(CoherenceState::host_valid, std::memory_order_release);
        return FaultOutcome::migrated;
    }
    die("fault engine: write-back made no progress");
}

std::size_t FaultEngine::drain_pending_frees(
    const std::function<void(DeviceAddr)>& free_fn) {
    std::size_t drained = 0;
    std::uint64_t head = pending_head_.load(std::memory_order_acquire);
    while (pending_tail_ < head) {
        DeviceAddr addr =
            pending_[pending_tail_ % kPendingCap].exchange(0, std::memory_order_acq_rel);
        if (addr == 0) break;  // producer claimed the slot but has not stored yet
        ++pending_tail_;
        free_fn(addr);
        ++drained;
    }
    return drained;
}

std::size_t FaultEngine::leaked_protections() const {
    std::size_t leaked = 0;
    for (RecordId id : registry_.live_ids()) {
        const AllocationRecord& rec = registry_.find(id);
        if (rec.host_protected.load(std::memory_order_acquire)) ++leaked;
    }
    return leaked;
}

}  // namespace upage
