#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <signal.h>

#include "upage/common.hpp"
#include "upage/device_model.hpp"
#include "upage/registry.hpp"
#include "upage/trace.hpp"

namespace upage {

/// One allocation mapped twice from the same pages: the application view,
/// which the engine may protect, and the engine view, which always stays
/// readable and writable so write-backs can land while the application view
/// is still fenced off.
struct HostMirrorBuffer {
    std::byte* app_view = nullptr;
    std::byte* engine_view = nullptr;
    std::uint64_t map_len = 0;
    int fd = -1;

    static HostMirrorBuffer create(std::uint64_t len, std::uint64_t page_size);
    void destroy();
};

enum class FaultOutcome : std::uint8_t { migrated, not_ours };

/// Demand write-back driver: fences host ranges while their data lives in a
/// device shadow and turns the resulting access violations into
/// device-to-host migrations, after which the faulting access resumes.
///
/// One engine per process; the constructor wires it to the signal path and
/// the destructor (or uninstall) unwires it.
class FaultEngine {
public:
    FaultEngine(Registry& registry, TraceSink& sink, const DeviceModel& model);
    ~FaultEngine();

    FaultEngine(const FaultEngine&) = delete;
    FaultEngine& operator=(const FaultEngine&) = delete;

    /// Installs the access-violation handler, chaining to any pre-existing
    /// one for faults that are not ours. Installing twice is an error.
    void install();
    void uninstall();
    bool installed() const { return installed_; }

    /// Fences the application view of a mirror-scheme managed record:
    /// no reads, no writes. Idempotent.
    void protect(AllocationRecord& rec);
    void unprotect(AllocationRecord& rec);

    /// Core of the handler; public so tests can drive it directly with a
    /// synthesized address.
    FaultOutcome handle_fault(HostAddr addr);

    /// Device shadows released inside a fault context are parked here and
    /// handed back to the pool by the next non-fault caller.
    std::size_t drain_pending_frees(const std::function<void(DeviceAddr)>& free_fn);

    /// Records still fenced; a clean teardown reports zero.
    std::size_t leaked_protections() const;

    std::uint64_t write_backs() const {
        return write_backs_.load(std::memory_order_relaxed);
    }

private:
    static void trampoline(int sig, siginfo_t* info, void* ucontext);
    void chain(int sig, siginfo_t* info, void* ucontext);
    FaultOutcome write_back(AllocationRecord& rec);

    Registry& registry_;
    TraceSink& sink_;
    SimTime write_back_latency_fs_;
    double interconnect_bw_gbps_;

    bool installed_ = false;
    struct sigaction previous_ {};

    std::atomic<std::uint64_t> write_backs_{0};

    static constexpr std::size_t kPendingCap = 1 << 14;
    std::atomic<DeviceAddr> pending_[kPendingCap] = {};
    std::atomic<std::uint64_t> pending_head_{0};
    std::uint64_t pending_tail_ = 0;
};

/// The engine currently wired to the signal path, if any.
FaultEngine* installed_fault_engine();

}  // namespace upage
