#include "upage/resolver.hpp"

#include <algorithm>
#include <cstring>

#include "upage/kernels.hpp"

namespace upage {

bool LaunchDependencies::touches(RecordId id) const {
    return std::binary_search(ids.begin(), ids.end(), id);
}

LaunchDependencies resolve(const std::byte* blob, std::size_t len,
                           const KernelDescriptor& desc, const Registry& registry) {
    std::size_t required = 0;
    for (const ArgField& a : desc.args)
        required = std::max(required, std::size_t{a.offset} + a.size);
    if (len < required)
        throw Error("argument blob of " + std::to_string(len) +
                    " bytes is shorter than kernel " + desc.mangled_name +
                    " requires (" + std::to_string(required) + ")");

    LaunchDependencies out;
    Registry::SnapshotGuard snap(registry);
    if (snap->entries.empty()) return out;

    auto add_match = [&](std::size_t off, std::uint64_t value, bool direct) {
        AllocationRecord* rec = snap->find(value);
        if (!rec) return;
        out.matches.push_back({off, rec->id, value, rec->base, direct});
        if (direct)
            ++out.direct_hits;
        else
            ++out.scanned_hits;
    };

    std::vector<kern::ScanHit> hits;
    for (const ArgField& a : desc.args) {
        if (a.kind == ValueKind::global_buffer_address) {
            std::uint64_t value;
            std::memcpy(&value, blob + a.offset, 8);
            add_match(a.offset, value, true);
        } else if (a.kind == ValueKind::by_value && a.size >= 8) {
            // Cheap vector pre-filter against the registry's global address
            // range; survivors get the precise per-record lookup.
            hits.resize(a.size / 2 + 1);
            std::size_t n = kern::kernels().scan_window_u64(
                blob + a.offset, a.size, snap->min_base, snap->max_end,
                hits.data(), hits.size());
            for (std::size_t i = 0; i < n; ++i)
                add_match(a.offset + hits[i].offset, hits[i].value, false);
        }
    }

    std::sort(out.matches.begin(), out.matches.end(),
              [](const DependencyMatch& a, const DependencyMatch& b) {
                  return a.blob_offset < b.blob_offset;
              });
    for (const DependencyMatch& m : out.matches) out.ids.push_back(m.record);
    std::sort(out.ids.begin(), out.ids.end());
    out.ids.erase(std::unique(out.ids.begin(), out.ids.end()), out.ids.end());
    return out;
}

std::vector<std::byte> rewrite_blob(
    const std::byte* blob, std::size_t len, const LaunchDependencies& deps,
    const std::function<DeviceAddr(RecordId)>& shadow_of) {
    std::vector<std::byte> out(blob, blob + len);
    for (const DependencyMatch& m : deps.matches) {
        DeviceAddr shadow = shadow_of(m.record);
        std::uint64_t rewritten = shadow + (m.value - m.base);
        std::memcpy(out.data() + m.blob_offset, &rewritten, 8);
    }
    return out;
}

}  // namespace upage
