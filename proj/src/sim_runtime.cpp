#include "upage/sim_runtime.hpp"

#include <cstring>

namespace upage {
namespace {

// Synthetic device address space, far from anything the host allocators
// hand out so a pointer scan can never confuse the two.
constexpr DeviceAddr kPoolBase = 0x4444'0000'0000ull;

}  // namespace

std::byte* KernelCtx::data(std::uint64_t addr) const {
    if (std::byte* p = dev_.device_ptr(addr)) return p;
    Registry::SnapshotGuard snap(reg_);
    if (AllocationRecord* rec = snap->find(addr)) return rec->engine_ptr(addr);
    return reinterpret_cast<std::byte*>(addr);
}

SimDevice::SimDevice(DeviceModel model, TraceSink& sink, Registry& registry)
    : model_(std::move(model)), sink_(sink), registry_(registry),
      next_addr_(kPoolBase) {
    model_.validate();
}

SimDevice::~SimDevice() {
    for (auto& [addr, block] : blocks_)
        if (block.owned) delete[] block.backing;
}

DeviceAddr SimDevice::device_alloc(std::uint64_t len, std::byte* backing) {
    if (len == 0) throw DeviceAllocError("zero-length device allocation");
    std::lock_guard lock(pool_mutex_);
    if (len > model_.capacity_bytes - live_bytes_)
        throw DeviceAllocError("device pool exhausted: " + std::to_string(len) +
                               " bytes requested, " +
                               std::to_string(model_.capacity_bytes - live_bytes_) +
                               " free");

    std::uint64_t span = round_up(len, model_.page_size);
    DeviceAddr addr = 0;
    for (auto it = free_list_.begin(); it != free_list_.end(); ++it) {
        if (it->second >= span) {
            addr = it->first;
            if (it->second == span) {
                free_list_.erase(it);
            } else {
                it->first += span;
                it->second -= span;
            }
            break;
        }
    }
    if (addr == 0) {
        addr = next_addr_;
        next_addr_ += span;
    }

    Block block;
    block.len = len;
    block.owned = backing == nullptr;
    block.backing = block.owned ? new std::byte[len]() : backing;
    blocks_.emplace(addr, block);
    live_bytes_ += len;
    return addr;
}

void SimDevice::device_free(DeviceAddr addr) {
    std::lock_guard lock(pool_mutex_);
    auto it = blocks_.find(addr);
    if (it == blocks_.end())
        throw Error("free of unknown device address " + std::to_string(addr));
    if (it->second.owned) delete[] it->second.backing;
    live_bytes_ -= it->second.len;
    free_list_.emplace_back(addr, round_up(it->second.len, model_.page_size));
    blocks_.erase(it);
}

std::uint64_t SimDevice::live_device_bytes() const {
    std::lock_guard lock(pool_mutex_);
    return live_bytes_;
}

std::size_t SimDevice::live_block_count() const {
    std::lock_guard lock(pool_mutex_);
    return blocks_.size();
}

std::byte* SimDevice::device_ptr(DeviceAddr addr) const {
    if (addr < kPoolBase) return nullptr;
    std::lock_guard lock(pool_mutex_);
    auto it = blocks_.upper_bound(addr);
    if (it == blocks_.begin()) return nullptr;
    --it;
    std::uint64_t off = addr - it->first;
    return off < it->second.len ? it->second.backing + off : nullptr;
}

void SimDevice::copy(CopyDir dir, std::byte* host, DeviceAddr device,
                     std::uint64_t len, RecordId record, const std::string& label) {
    if (len == 0) throw Error("zero-length copy rejected");
    std::byte* dev = device_ptr(device);
    if (!dev || device_ptr(device + len - 1) == nullptr)
        throw Error("copy range [" + std::to_string(device) + ", +" +
                    std::to_string(len) + ") is not device memory");
    if (dir == CopyDir::h2d)
        std::memcpy(dev, host, len);
    else
        std::memcpy(host, dev, len);
    sink_.emit(dir == CopyDir::h2d ? EventKind::h2d : EventKind::d2h, record, len,
               label, model_.copy_cost(len));
}

void SimDevice::launch(const SimKernel& kernel, const std::byte* blob,
                       std::size_t len, std::uint64_t items,
                       const std::vector<LaunchCharge>& charges) {
    if (!kernel.body) throw Error("kernel " + kernel.name + " has no body");
    KernelCtx ctx(*this, registry_);
    kernel.body(ctx, blob, items);
    (void)len;

    SimTime advance = kernel.flops ? model_.compute_cost(kernel.flops(items)) : 0;
    std::uint64_t total_bytes = 0;
    for (const LaunchCharge& c : charges) {
        advance += model_.access_cost(c.bytes, c.at_device_bw);
        total_bytes += c.bytes;
    }
    sink_.emit(EventKind::launch, 0, total_bytes, kernel.name, advance);
}

void SimDevice::advise_device_preferred(AllocationRecord& rec) {
    if (rec.kind != MemKind::managed)
        throw Error("advise on non-managed record " + std::to_string(rec.id));
    if (model_.quirk_advise_misalign) {
        sink_.emit(EventKind::warning, rec.id, 0,
                   "advise ignored: allocation alignment unsupported by runtime");
        return;
    }
    rec.advise_hint = true;
    sink_.emit(EventKind::advise, rec.id, 0, "device_preferred");
}

void SimDevice::prefetch(AllocationRecord& rec, bool to_device) {
    if (rec.kind != MemKind::managed)
        throw Error("prefetch on non-managed record " + std::to_string(rec.id));
    if (model_.quirk_advise_misalign) {
        sink_.emit(EventKind::warning, rec.id, 0,
                   "prefetch ignored: allocation alignment unsupported by runtime");
        return;
    }
    if (rec.device_resident.load(std::memory_order_relaxed) == to_device) return;
    rec.device_resident.store(to_device, std::memory_order_relaxed);
    sink_.emit(EventKind::prefetch, rec.id, rec.req_len,
               to_device ? "to_device" : "to_host", model_.copy_cost(rec.req_len));
}

void SimDevice::note_host_access(AllocationRecord& rec) {
    if (!rec.device_resident.load(std::memory_order_relaxed)) return;
    rec.device_resident.store(false, std::memory_order_relaxed);
    sink_.emit(EventKind::prefetch, rec.id, rec.req_len, "to_host",
               model_.copy_cost(rec.req_len));
}

}  // namespace upage
