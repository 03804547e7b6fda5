#include "upage/interposer.hpp"

#include <algorithm>
#include <sched.h>

namespace upage {
namespace {

void noop_body(const KernelCtx&, const std::byte*, std::uint64_t) {}

}  // namespace

Interposer::Interposer(InterposerConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.model.validate();
    device_ = std::make_unique<SimDevice>(cfg_.model, sink_, registry_);
    engine_ = std::make_unique<FaultEngine>(registry_, sink_, cfg_.model);
    registry_.set_release_hook([this](AllocationRecord& rec) {
        if (rec.host_protected.load(std::memory_order_acquire))
            engine_->unprotect(rec);
        if (DeviceAddr shadow = rec.shadow.exchange(0, std::memory_order_acq_rel))
            device_->device_free(shadow);
    });
    if (cfg_.install_handler) engine_->install();
}

Interposer::~Interposer() {
    shutdown();
    for (auto& [base, alloc] : allocs_) alloc.buf.destroy();
}

void* Interposer::managed_alloc(std::uint64_t len) {
    if (len == 0) throw Error("managed allocation of zero bytes");
    std::lock_guard lock(mutex_);
    drain_frees();

    HostMirrorBuffer buf = HostMirrorBuffer::create(len, cfg_.model.page_size);
    SchemeKind scheme = cfg_.scheme;
    DeviceAddr block = 0;
    if (scheme == SchemeKind::device) {
        try {
            block = device_->device_alloc(len, buf.engine_view);
        } catch (const DeviceAllocError&) {
            if (!cfg_.fallback_on_device_oom) {
                buf.destroy();
                throw;
            }
            scheme = SchemeKind::mirror;
        }
    }

    RegisterParams params;
    params.base = reinterpret_cast<HostAddr>(buf.app_view);
    params.len = len;
    params.kind = scheme == SchemeKind::device ? MemKind::device_local
                                               : MemKind::managed;
    params.scheme = scheme;
    params.engine_view = reinterpret_cast<HostAddr>(buf.engine_view);
    RecordId id;
    try {
        id = registry_.register_range(params);
    } catch (...) {
        if (block) device_->device_free(block);
        buf.destroy();
        throw;
    }

    AllocationRecord& rec = registry_.find(id);
    if (scheme == SchemeKind::device) {
        rec.shadow.store(block, std::memory_order_release);
        rec.shadow_data.store(buf.engine_view, std::memory_order_release);
        rec.device_resident.store(true, std::memory_order_release);
        rec.state.store(CoherenceState::device_valid, std::memory_order_release);
    }
    if (scheme != cfg_.scheme)
        sink_.emit(EventKind::warning, id, len,
                   "device pool exhausted, allocation degraded to mirror");
    sink_.emit(EventKind::alloc, id, len, to_string(scheme));
    if (scheme == SchemeKind::advise) device_->advise_device_preferred(rec);

    allocs_.emplace(params.base, ManagedAlloc{buf, id});
    return buf.app_view;
}

void Interposer::managed_free(void* ptr) {
    std::lock_guard lock(mutex_);
    drain_frees();
    auto it = allocs_.find(reinterpret_cast<HostAddr>(ptr));
    if (it == allocs_.end())
        throw Error("free of unknown managed address");
    ManagedAlloc alloc = it->second;
    sink_.emit(EventKind::free_mem, alloc.id, registry_.find(alloc.id).req_len, "");
    registry_.unregister(alloc.id);  // release hook frees shadow + protection
    alloc.buf.destroy();
    allocs_.erase(it);
}

void Interposer::register_code_object(const std::byte* image, std::size_t len) {
    std::vector<std::string> warnings;
    DescriptorSet set = parse_code_object(image, len, &warnings);
    std::lock_guard lock(mutex_);
    table_.add_descriptors(set);
    for (const std::string& w : warnings)
        sink_.emit(EventKind::warning, 0, 0, w);
}

void Interposer::register_function(const void* handle, const char* name) {
    if (!name) throw Error("null kernel name");
    table_.register_handle(handle, name);
}

void Interposer::add_kernel(SimKernel kernel) {
    if (kernel.name.empty()) throw Error("kernel body needs a name");
    std::lock_guard lock(mutex_);
    kernels_[kernel.name] = std::move(kernel);
}

AllocationRecord& Interposer::record_for(const void* ptr, const char* verb) {
    auto id = registry_.lookup(reinterpret_cast<HostAddr>(ptr));
    if (!id) throw Error(std::string(verb) + " on untracked address");
    return registry_.find(*id);
}

void Interposer::migrate_for_launch(
    AllocationRecord& rec, std::vector<std::pair<RecordId, DeviceAddr>>& created) {
    // Fence the application view first; the engine view stays readable for
    // the copy. A thread faulting inside this window waits on the state.
    engine_->protect(rec);
    DeviceAddr shadow = 0;
    for (const auto& [id, addr] : created)
        if (id == rec.id) shadow = addr;
    device_->copy(CopyDir::h2d, rec.engine_ptr(rec.base), shadow, rec.req_len,
                  rec.id, "migrate");
    rec.shadow.store(shadow, std::memory_order_release);
    rec.shadow_data.store(device_->device_ptr(shadow), std::memory_order_release);
    rec.state.store(CoherenceState::device_valid, std::memory_order_release);
}

void Interposer::launch(const void* handle, const std::byte* blob, std::size_t len,
                        std::uint64_t items) {
    std::lock_guard lock(mutex_);
    drain_frees();

    const KernelDescriptor& desc = table_.resolve(handle);
    LaunchDependencies deps = resolve(blob, len, desc, registry_);

    SimKernel kernel;
    auto kit = kernels_.find(desc.mangled_name);
    if (kit != kernels_.end()) {
        kernel = kit->second;
    } else {
        kernel.name = desc.mangled_name;
        kernel.body = noop_body;
    }

    // A launch must not begin while a write-back on one of its deps is in
    // flight; wait for each record to leave the transient state.
    std::vector<AllocationRecord*> dep_recs;
    dep_recs.reserve(deps.ids.size());
    for (RecordId id : deps.ids) {
        AllocationRecord& rec = registry_.find(id);
        for (int spin = 0;
             rec.state.load(std::memory_order_acquire) ==
             CoherenceState::migrating_to_host;
             ++spin) {
            if (spin > (1 << 26))
                throw Error("write-back on record " + std::to_string(id) +
                            " never completed");
            sched_yield();
        }
        dep_recs.push_back(&rec);
    }

    // Migration is all-or-nothing: grab every shadow first, where the only
    // failure mode (pool exhaustion) is still harmless, then flip states.
    std::vector<std::pair<RecordId, DeviceAddr>> created;
    try {
        for (AllocationRecord* rec : dep_recs) {
            if (rec->scheme == SchemeKind::mirror &&
                rec->state.load(std::memory_order_acquire) ==
                    CoherenceState::host_valid)
                created.emplace_back(rec->id, device_->device_alloc(rec->req_len));
        }
    } catch (...) {
        for (const auto& [id, addr] : created) device_->device_free(addr);
        throw;
    }

    for (AllocationRecord* rec : dep_recs) {
        switch (rec->scheme) {
            case SchemeKind::mirror:
                if (rec->state.load(std::memory_order_acquire) ==
                    CoherenceState::host_valid)
                    migrate_for_launch(*rec, created);
                break;
            case SchemeKind::advise:
                device_->prefetch(*rec, true);
                break;
            case SchemeKind::device:
            case SchemeKind::passthrough:
                break;
        }
    }

    // Kernels must see device addresses for migrated records.
    LaunchDependencies mirror_deps;
    for (const DependencyMatch& m : deps.matches) {
        AllocationRecord& rec = registry_.find(m.record);
        if (rec.scheme == SchemeKind::mirror) mirror_deps.matches.push_back(m);
    }
    std::vector<std::byte> rewritten;
    const std::byte* final_blob = blob;
    if (!mirror_deps.matches.empty()) {
        rewritten = rewrite_blob(blob, len, mirror_deps, [this](RecordId id) {
            return registry_.find(id).shadow.load(std::memory_order_acquire);
        });
        final_blob = rewritten.data();
    }

    std::vector<LaunchCharge> charges;
    charges.reserve(dep_recs.size());
    for (AllocationRecord* rec : dep_recs) {
        bool fast = rec->scheme == SchemeKind::mirror ||
                    rec->scheme == SchemeKind::device ||
                    (rec->scheme == SchemeKind::advise &&
                     rec->device_resident.load(std::memory_order_acquire));
        charges.push_back({rec->id, rec->req_len, fast});
    }

    device_->launch(kernel, final_blob, len, items, charges);
}

void Interposer::note_host_read(const void* ptr, std::uint64_t len) {
    if (len == 0) return;
    Registry::SnapshotGuard snap(registry_);
    AllocationRecord* rec = snap->find(reinterpret_cast<HostAddr>(ptr));
    if (!rec) return;
    if (rec->scheme == SchemeKind::advise) {
        device_->note_host_access(*rec);
    } else if (rec->scheme == SchemeKind::device) {
        std::uint64_t bytes = std::min(len, rec->req_len);
        sink_.emit(EventKind::d2h, rec->id, bytes, "bar",
                   transfer_fs(bytes, cfg_.model.interconnect_bw_gbps));
    }
}

void Interposer::note_host_write(const void* ptr, std::uint64_t len) {
    if (len == 0) return;
    Registry::SnapshotGuard snap(registry_);
    AllocationRecord* rec = snap->find(reinterpret_cast<HostAddr>(ptr));
    if (!rec) return;
    if (rec->scheme == SchemeKind::advise) {
        device_->note_host_access(*rec);
    } else if (rec->scheme == SchemeKind::device) {
        std::uint64_t bytes = std::min(len, rec->req_len);
        sink_.emit(EventKind::h2d, rec->id, bytes, "bar",
                   transfer_fs(bytes, cfg_.model.interconnect_bw_gbps));
    }
}

void Interposer::shutdown() {
    std::lock_guard lock(mutex_);
    if (shut_down_) return;
    drain_frees();
    engine_->uninstall();
    shut_down_ = true;
}

std::vector<std::pair<RecordId, void*>> Interposer::live_allocations() const {
    std::lock_guard lock(mutex_);
    std::vector<std::pair<RecordId, void*>> out;
    out.reserve(allocs_.size());
    for (const auto& [base, alloc] : allocs_)
        out.emplace_back(alloc.id, reinterpret_cast<void*>(base));
    std::sort(out.begin(), out.end());
    return out;
}

void Interposer::drain_frees() {
    engine_->drain_pending_frees(
        [this](DeviceAddr addr) { device_->device_free(addr); });
}

}  // namespace upage
