#include "upage/registry.hpp"

#include <algorithm>
#include <sched.h>

namespace upage {

const char* to_string(SchemeKind s) {
    switch (s) {
        case SchemeKind::mirror: return "mirror";
        case SchemeKind::device: return "device";
        case SchemeKind::advise: return "advise";
        case SchemeKind::passthrough: return "passthrough";
    }
    return "?";
}

const char* to_string(CoherenceState s) {
    switch (s) {
        case CoherenceState::host_valid: return "host_valid";
        case CoherenceState::device_valid: return "device_valid";
        case CoherenceState::both_valid: return "both_valid";
        case CoherenceState::migrating_to_host: return "migrating_to_host";
    }
    return "?";
}

SchemeKind scheme_from_string(std::string_view s) {
    if (s == "mirror") return SchemeKind::mirror;
    if (s == "device") return SchemeKind::device;
    if (s == "advise") return SchemeKind::advise;
    if (s == "passthrough") return SchemeKind::passthrough;
    throw ConfigError("unknown scheme: " + std::string(s));
}

AllocationRecord* Registry::Snapshot::find(HostAddr addr) const {
    if (entries.empty() || addr < min_base || addr >= max_end) return nullptr;
    // First entry whose base is > addr, then step back one.
    auto it = std::upper_bound(
        entries.begin(), entries.end(), addr,
        [](HostAddr a, const Entry& e) { return a < e.base; });
    if (it == entries.begin()) return nullptr;
    --it;
    return addr < it->end ? it->record : nullptr;
}

Registry::SnapshotGuard::SnapshotGuard(const Registry& reg) : reg_(reg) {
    reg_.readers_.fetch_add(1, std::memory_order_seq_cst);
    snap_ = reg_.snapshot_.load(std::memory_order_acquire);
}

Registry::SnapshotGuard::~SnapshotGuard() {
    reg_.readers_.fetch_sub(1, std::memory_order_seq_cst);
}

Registry::Registry(std::uint64_t page_size) : page_size_(page_size) {
    if (page_size_ == 0 || (page_size_ & (page_size_ - 1)) != 0)
        throw ConfigError("page size must be a power of two");
    snapshot_.store(new Snapshot{}, std::memory_order_release);
}

Registry::~Registry() {
    delete snapshot_.load(std::memory_order_acquire);
    for (const Snapshot* s : retired_) delete s;
}

RecordId Registry::register_range(const RegisterParams& p) {
    if (p.len == 0) throw RegistryError("cannot register a zero-length range");
    if (p.base % page_size_ != 0)
        throw RegistryError("range base is not page aligned");

    std::uint64_t len = round_up(p.len, page_size_);
    HostAddr end = p.base + len;

    std::lock_guard lock(mutex_);
    for (const auto& r : records_) {
        if (p.base < r->base + r->len && r->base < end)
            throw RegistryError("range overlaps an existing registration");
    }

    auto rec = std::make_unique<AllocationRecord>();
    rec->id = next_id_++;
    rec->base = p.base;
    rec->len = len;
    rec->req_len = p.len;
    rec->kind = p.kind;
    rec->scheme = p.scheme;
    rec->engine_view = p.engine_view;
    RecordId id = rec->id;
    records_.push_back(std::move(rec));
    publish_locked();
    return id;
}

void Registry::unregister(RecordId id) {
    std::unique_ptr<AllocationRecord> victim;
    {
        std::lock_guard lock(mutex_);
        auto it = std::find_if(records_.begin(), records_.end(),
                               [id](const auto& r) { return r->id == id; });
        if (it == records_.end())
            throw RegistryError("unregister of unknown record " + std::to_string(id));
        victim = std::move(*it);
        records_.erase(it);
        publish_locked();
        reclaim_locked();
    }
    // The hook runs outside the lock: it may free device shadows or flip
    // page protection, neither of which should block lookups.
    if (release_hook_) release_hook_(*victim);
}

std::optional<RecordId> Registry::lookup(HostAddr addr) const {
    SnapshotGuard guard(*this);
    AllocationRecord* rec = guard->find(addr);
    if (!rec) return std::nullopt;
    return rec->id;
}

AllocationRecord& Registry::find(RecordId id) const {
    std::lock_guard lock(mutex_);
    for (const auto& r : records_)
        if (r->id == id) return *r;
    throw RegistryError("unknown record " + std::to_string(id));
}

std::size_t Registry::live_count() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

std::vector<RecordId> Registry::live_ids() const {
    std::lock_guard lock(mutex_);
    std::vector<RecordId> ids;
    ids.reserve(records_.size());
    for (const auto& r : records_) ids.push_back(r->id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

void Registry::set_release_hook(ReleaseHook hook) {
    std::lock_guard lock(mutex_);
    release_hook_ = std::move(hook);
}

void Registry::publish_locked() {
    auto* next = new Snapshot{};
    next->entries.reserve(records_.size());
    for (const auto& r : records_)
        next->entries.push_back({r->base, r->base + r->len, r.get()});
    std::sort(next->entries.begin(), next->entries.end(),
              [](const auto& a, const auto& b) { return a.base < b.base; });
    if (!next->entries.empty()) {
        next->min_base = next->entries.front().base;
        next->max_end = next->entries.back().end;
    }
    const Snapshot* old = snapshot_.exchange(next, std::memory_order_acq_rel);
    retired_.push_back(old);
}

void Registry::reclaim_locked() {
    if (retired_.empty()) return;
    // Readers increment before loading the pointer, so once the count hits
    // zero nobody can still hold a retired snapshot. Bounded wait: if a
    // reader camps on the counter we just keep the garbage until teardown.
    for (int spin = 0; spin < 10000; ++spin) {
        if (readers_.load(std::memory_order_seq_cst) == 0) {
            for (const Snapshot* s : retired_) delete s;
            retired_.clear();
            return;
        }
        if (spin % 64 == 63) sched_yield();
    }
}

}  // namespace upage
