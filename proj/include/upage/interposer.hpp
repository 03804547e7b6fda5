#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "upage/code_object.hpp"
#include "upage/device_model.hpp"
#include "upage/fault_engine.hpp"
#include "upage/registry.hpp"
#include "upage/resolver.hpp"
#include "upage/sim_runtime.hpp"
#include "upage/trace.hpp"

namespace upage {

struct InterposerConfig {
    SchemeKind scheme = SchemeKind::mirror;
    DeviceModel model;
    bool fallback_on_device_oom = true;
    /// Tests that drive handle_fault directly can skip the real handler.
    bool install_handler = true;
};

/// Drives one scheme over the simulated runtime: owns the registry, trace
/// sink, device and fault engine, and implements the intercepted verbs
/// (alloc, free, register, launch) plus the host-access notifications the
/// cost model needs for schemes without page protection.
class Interposer {
public:
    explicit Interposer(InterposerConfig cfg);
    ~Interposer();

    Interposer(const Interposer&) = delete;
    Interposer& operator=(const Interposer&) = delete;

    // ── intercepted verbs ────────────────────────────────────────────────
    void* managed_alloc(std::uint64_t len);
    void managed_free(void* ptr);

    void register_code_object(const std::byte* image, std::size_t len);
    void register_function(const void* handle, const char* name);

    /// Binds the simulated body executed when `name` is launched.
    void add_kernel(SimKernel kernel);

    void launch(const void* handle, const std::byte* blob, std::size_t len,
                std::uint64_t items);

    // ── host-access notifications ────────────────────────────────────────
    // The mirror scheme needs neither (protection catches the access); the
    // advise scheme pages residency back; the device scheme charges the
    // host-side window traffic. Unknown addresses are plain host memory.
    void note_host_read(const void* ptr, std::uint64_t len);
    void note_host_write(const void* ptr, std::uint64_t len);

    /// Drains deferred shadow frees and uninstalls the fault handler.
    /// Idempotent; the destructor calls it.
    void shutdown();

    SchemeKind scheme() const { return cfg_.scheme; }
    const DeviceModel& model() const { return cfg_.model; }
    Registry& registry() { return registry_; }
    TraceSink& sink() { return sink_; }
    SimDevice& device() { return *device_; }
    FaultEngine& engine() { return *engine_; }
    RegistrationTable& table() { return table_; }

    /// Records currently tracked with their app-view base, for checksums.
    std::vector<std::pair<RecordId, void*>> live_allocations() const;

private:
    struct ManagedAlloc {
        HostMirrorBuffer buf;
        RecordId id = 0;
        DeviceAddr device_block = 0;  // device-scheme backing block
    };

    AllocationRecord& record_for(const void* ptr, const char* verb);
    void migrate_for_launch(AllocationRecord& rec,
                            std::vector<std::pair<RecordId, DeviceAddr>>& created);
    void drain_frees();

    InterposerConfig cfg_;
    TraceSink sink_;
    Registry registry_;
    std::unique_ptr<SimDevice> device_;
    std::unique_ptr<FaultEngine> engine_;
    RegistrationTable table_;

    mutable std::mutex mutex_;  // serializes verbs; fault path never takes it
    std::unordered_map<HostAddr, ManagedAlloc> allocs_;
    std::unordered_map<std::string, SimKernel> kernels_;
    bool shut_down_ = false;
};

}  // namespace upage
