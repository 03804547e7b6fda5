#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "upage/common.hpp"
#include "upage/device_model.hpp"
#include "upage/registry.hpp"
#include "upage/trace.hpp"

namespace upage {

class DeviceAllocError : public Error {
public:
    using Error::Error;
};

class SimDevice;

/// Address translation handed to kernel bodies: device-pool addresses map to
/// their backing store, tracked host addresses to the always-writable engine
/// view, anything else is used as a raw host pointer.
class KernelCtx {
public:
    KernelCtx(SimDevice& dev, const Registry& reg) : dev_(dev), reg_(reg) {}
    std::byte* data(std::uint64_t addr) const;

    template <typename T>
    T* as(std::uint64_t addr) const {
        return reinterpret_cast<T*>(data(addr));
    }

private:
    SimDevice& dev_;
    const Registry& reg_;
};

/// A simulated kernel: a host callback standing in for device code plus the
/// modeled work per launch.
struct SimKernel {
    std::string name;
    /// Executes the kernel synchronously. `blob` is the (possibly rewritten)
    /// argument blob; `items` the launch geometry.
    std::function<void(const KernelCtx&, const std::byte* blob, std::uint64_t items)> body;
    /// Modeled arithmetic per launch; 0 for memory-bound kernels.
    std::function<std::uint64_t(std::uint64_t items)> flops;
};

enum class CopyDir : std::uint8_t { h2d, d2h };

/// What a launch is charged for touching one buffer.
struct LaunchCharge {
    RecordId record = 0;
    std::uint64_t bytes = 0;
    bool at_device_bw = false;
};

/// In-process stand-in for the device runtime: a device memory pool, explicit
/// transfers, synchronous kernel execution, and advise/prefetch verbs, all
/// advancing the shared simulated clock through the trace sink.
class SimDevice {
public:
    SimDevice(DeviceModel model, TraceSink& sink, Registry& registry);
    ~SimDevice();

    SimDevice(const SimDevice&) = delete;
    SimDevice& operator=(const SimDevice&) = delete;

    const DeviceModel& model() const { return model_; }
    TraceSink& sink() { return sink_; }

    // ── device pool ──────────────────────────────────────────────────────
    /// Carves a block out of the pool. With `backing` the block aliases
    /// caller-owned host memory (host-visible device memory); otherwise the
    /// pool owns zeroed storage for it.
    DeviceAddr device_alloc(std::uint64_t len, std::byte* backing = nullptr);
    void device_free(DeviceAddr addr);
    std::uint64_t live_device_bytes() const;
    std::size_t live_block_count() const;

    /// Backing pointer for an address inside a live block; nullptr when the
    /// address is not device-pool memory.
    std::byte* device_ptr(DeviceAddr addr) const;

    // ── transfers ────────────────────────────────────────────────────────
    /// Explicit copy between host memory and a device block. Charges
    /// per-op latency plus the bytes at interconnect bandwidth.
    void copy(CopyDir dir, std::byte* host, DeviceAddr device, std::uint64_t len,
              RecordId record, const std::string& label);

    // ── kernel execution ─────────────────────────────────────────────────
    /// Runs `kernel.body` synchronously, then advances the clock by the
    /// modeled compute time plus each charge's bytes at its bandwidth.
    /// Emits one launch event carrying the total bytes charged.
    void launch(const SimKernel& kernel, const std::byte* blob, std::size_t len,
                std::uint64_t items, const std::vector<LaunchCharge>& charges);

    // ── managed-memory verbs ─────────────────────────────────────────────
    /// Records a residency preference. Under the alignment quirk the verb is
    /// silently ignored apart from a warning event.
    void advise_device_preferred(AllocationRecord& rec);

    /// Moves modeled residency of a managed record. Charges the transfer at
    /// interconnect bandwidth; already-resident destinations are free no-ops.
    /// Under the alignment quirk: warning event, no residency change.
    void prefetch(AllocationRecord& rec, bool to_device);

    /// Host-side touch of a managed record; pages a device-resident record
    /// back to the host (advise scheme's migration-on-host-access).
    void note_host_access(AllocationRecord& rec);

private:
    struct Block {
        std::uint64_t len = 0;
        std::byte* backing = nullptr;
        bool owned = false;
    };

    DeviceModel model_;
    TraceSink& sink_;
    Registry& registry_;

    mutable std::mutex pool_mutex_;
    std::map<DeviceAddr, Block> blocks_;
    std::vector<std::pair<DeviceAddr, std::uint64_t>> free_list_;
    DeviceAddr next_addr_;
    std::uint64_t live_bytes_ = 0;

    friend class KernelCtx;
};

}  // namespace upage
