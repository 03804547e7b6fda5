#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "upage/code_object.hpp"
#include "upage/common.hpp"
#include "upage/registry.hpp"

namespace upage {

/// One 8-byte window in a launch argument blob that resolved to a tracked
/// allocation.
struct DependencyMatch {
    std::size_t blob_offset = 0;  // window position within the blob
    RecordId record = 0;
    HostAddr value = 0;  // the pointer value found in the window
    HostAddr base = 0;   // record base at resolution time
    bool direct = false; // from a buffer-address arg rather than a capture scan

    bool operator==(const DependencyMatch&) const = default;
};

struct LaunchDependencies {
    std::vector<DependencyMatch> matches;  // ascending blob_offset
    std::vector<RecordId> ids;             // sorted, unique
    std::uint32_t direct_hits = 0;
    std::uint32_t scanned_hits = 0;

    bool touches(RecordId id) const;
};

/// Extracts the set of tracked allocations a launch may touch. Buffer-address
/// args are read directly; by-value captures are swept with an 8-byte window
/// at 2-byte steps (odd-offset embedded pointers are therefore missed, a
/// documented fidelity limit). Values that resolve to no record are ignored.
/// Only first-level indirection is considered: the pointee's own contents are
/// never chased.
LaunchDependencies resolve(const std::byte* blob, std::size_t len,
                           const KernelDescriptor& desc, const Registry& registry);

/// Returns a copy of the blob with every matched window's pointer redirected
/// into the record's shadow allocation, interior offsets preserved:
/// new = shadow_of(record) + (value - base). The input blob is untouched.
std::vector<std::byte> rewrite_blob(
    const std::byte* blob, std::size_t len, const LaunchDependencies& deps,
    const std::function<DeviceAddr(RecordId)>& shadow_of);

}  // namespace upage
