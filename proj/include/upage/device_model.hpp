#pragma once

#include <cstdint>
#include <string>

#include "upage/common.hpp"

namespace upage {

/// Performance envelope and behavioral switches of the simulated platform.
/// Loaded from a flat key = value config file; presets/ ships one per
/// modeled platform.
struct DeviceModel {
    std::string name = "default";
    double device_bw_gbps = 1228.8;       // device-local memory bandwidth
    double interconnect_bw_gbps = 31.5;   // host<->device link bandwidth
    double fp32_gflops = 23070.0;         // peak rate behind the compute-time model
    double per_op_latency_s = 10e-6;      // fixed cost per explicit transfer op
    std::uint64_t page_size = 4096;
    std::uint64_t capacity_bytes = 32ull << 30;

    /// Models the managed-allocator alignment breakage that makes
    /// advise/prefetch verbs silently ineffective on interposed allocations.
    bool quirk_advise_misalign = true;

    void validate() const;

    SimTime latency_fs() const { return seconds_to_fs(per_op_latency_s); }
    SimTime copy_cost(std::uint64_t bytes) const {
        return latency_fs() + transfer_fs(bytes, interconnect_bw_gbps);
    }
    SimTime access_cost(std::uint64_t bytes, bool device_resident) const {
        return transfer_fs(bytes, device_resident ? device_bw_gbps
                                                  : interconnect_bw_gbps);
    }
    SimTime compute_cost(std::uint64_t flops) const {
        return transfer_fs(flops, fp32_gflops);  // same fs-per-giga arithmetic
    }

    static DeviceModel from_file(const std::string& path);
};

}  // namespace upage
