#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

#include "upage/common.hpp"

namespace upage {

enum class SchemeKind : std::uint8_t { mirror, device, advise, passthrough };
enum class MemKind : std::uint8_t { managed, device_local, plain_host };

/// Per-allocation coherence machine. `migrating_to_host` is a transient
/// serialization state used while a write-back is in flight; stable states
/// are the first three.
enum class CoherenceState : std::uint8_t {
    host_valid,
    device_valid,
    both_valid,
    migrating_to_host,
};

const char* to_string(SchemeKind s);
const char* to_string(CoherenceState s);
SchemeKind scheme_from_string(std::string_view s);

struct AllocationRecord {
    RecordId id = 0;
    HostAddr base = 0;        // application-visible view, page aligned
    std::uint64_t len = 0;    // page multiple
    std::uint64_t req_len = 0;  // exact length the caller asked for
    MemKind kind = MemKind::managed;
    SchemeKind scheme = SchemeKind::passthrough;

    std::atomic<CoherenceState> state{CoherenceState::host_valid};
    std::atomic<DeviceAddr> shadow{0};          // 0 = none
    std::atomic<std::byte*> shadow_data{nullptr};  // backing of the shadow, fault-safe
    std::atomic<std::uint32_t> generation{0};   // host<->device round trips
    std::atomic<std::uint32_t> faults_served{0};
    std::atomic<bool> host_protected{false};
    std::atomic<bool> device_resident{false};   // advise-scheme cost-model residency
    bool advise_hint = false;

    HostAddr engine_view = 0;  // side mapping that stays writable; == base if none

    bool contains(HostAddr a) const { return a >= base && a < base + len; }

    /// Pointer into the always-accessible view at an app-view address.
    std::byte* engine_ptr(HostAddr app_addr) const {
        HostAddr view = engine_view ? engine_view : base;
        return reinterpret_cast<std::byte*>(view + (app_addr - base));
    }
};

class RegistryError : public Error {
public:
    using Error::Error;
};

struct RegisterParams {
    HostAddr base = 0;
    std::uint64_t len = 0;
    MemKind kind = MemKind::managed;
    SchemeKind scheme = SchemeKind::passthrough;
    HostAddr engine_view = 0;
};

/// Owns every tracked allocation. Lookups go through immutable snapshots
/// published with an atomic pointer swap, so they are safe to run from a
/// synchronous fault handler concurrently with register/unregister.
class Registry {
public:
    struct Snapshot {
        struct Entry {
            HostAddr base;
            HostAddr end;
            AllocationRecord* record;
        };
        std::vector<Entry> entries;  // sorted by base, non-overlapping
        HostAddr min_base = 0;
        HostAddr max_end = 0;

        AllocationRecord* find(HostAddr addr) const;
    };

    /// RAII read guard; keeps the snapshot alive while held.
    class SnapshotGuard {
    public:
        explicit SnapshotGuard(const Registry& reg);
        ~SnapshotGuard();
        SnapshotGuard(const SnapshotGuard&) = delete;
        SnapshotGuard& operator=(const SnapshotGuard&) = delete;
        const Snapshot& operator*() const { return *snap_; }
        const Snapshot* operator->() const { return snap_; }

    private:
        const Registry& reg_;
        const Snapshot* snap_;
    };

    explicit Registry(std::uint64_t page_size = 4096);
    ~Registry();

    RecordId register_range(const RegisterParams& p);
    void unregister(RecordId id);

    std::optional<RecordId> lookup(HostAddr addr) const;
    AllocationRecord& find(RecordId id) const;  // throws on unknown id

    std::uint64_t page_size() const { return page_size_; }
    std::size_t live_count() const;
    std::vector<RecordId> live_ids() const;

    /// Invoked on unregister before the record is dropped; the interposer
    /// installs resource teardown (shadow free, protection removal) here.
    using ReleaseHook = std::function<void(AllocationRecord&)>;
    void set_release_hook(ReleaseHook hook);

private:
    friend class SnapshotGuard;

    void publish_locked();   // rebuild + swap snapshot; caller holds mutex_
    void reclaim_locked();   // free retired snapshots once readers are quiescent

    std::uint64_t page_size_;
    mutable std::mutex mutex_;
    std::vector<std::unique_ptr<AllocationRecord>> records_;
    RecordId next_id_ = 1;
    ReleaseHook release_hook_;

    std::atomic<const Snapshot*> snapshot_;
    mutable std::atomic<std::uint32_t> readers_{0};
    std::vector<const Snapshot*> retired_;
};

}  // namespace upage
