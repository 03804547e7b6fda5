#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "upage/device_model.hpp"
#include "upage/registry.hpp"
#include "upage/trace.hpp"

namespace upage::bench {

enum class WorkloadKind : std::uint8_t { stream, cg, hydro, dock };

const char* to_string(WorkloadKind k);
WorkloadKind workload_from_string(std::string_view s);

/// Shape parameters of the synthetic mini-apps. Defaults are desk scale;
/// every knob can be raised toward the original applications' sizes.
struct WorkloadSpec {
    WorkloadKind kind = WorkloadKind::stream;
    std::uint64_t elems = 1ull << 20;  // stream: array elements
    std::uint64_t grid = 192;          // cg / hydro: square grid edge
    std::uint64_t poses = 256;         // dock: poses scored per launch
    std::uint64_t iterations = 100;    // outer iterations / steps
    std::uint64_t cadence = 20;        // hydro: steps between host reductions

    void validate() const;
    static WorkloadSpec defaults(WorkloadKind kind);
};

struct RunResult {
    SchemeKind scheme = SchemeKind::passthrough;
    WorkloadSpec spec;
    std::string model_name;
    std::string checksum;  // hex digest of all managed buffers at the end
    std::vector<TraceEvent> events;
};

/// Executes the workload through the interposer under `scheme` and returns
/// the finished trace plus the final-contents checksum.
RunResult run_workload(const WorkloadSpec& spec, SchemeKind scheme,
                       const DeviceModel& model);

/// Same arithmetic on plain host memory with no engine involved; the
/// reference every scheme's checksum must match bit-for-bit.
std::string host_oracle_checksum(const WorkloadSpec& spec);

// ── trace-derived reporting ─────────────────────────────────────────────────

struct KernelStats {
    std::string kernel;
    std::uint64_t launches = 0;
    double eff_bw_gbps = 0.0;  // mean over post-warm-up launches
};

/// Everything here is recomputable from the trace alone.
struct Summary {
    std::string scheme;
    std::string workload;
    std::uint64_t bytes_h2d = 0;
    std::uint64_t bytes_d2h = 0;
    std::uint64_t faults = 0;
    SimTime sim_time = 0;
    SimTime final_d2h_time = 0;  // transfer time spent after the last launch
    std::vector<KernelStats> kernels;
};

Summary summarize(std::span<const TraceEvent> events, std::string scheme,
                  std::string workload);

void write_csv(std::ostream& out, std::span<const Summary> rows);
void write_csv_file(const std::string& path, std::span<const Summary> rows);

/// Simulated time between the last two launches of `kernel`: the per-
/// iteration steady-state cost once migrations are done.
SimTime steady_iteration_time(std::span<const TraceEvent> events,
                              std::string_view kernel);

/// Clock advance attributed to each launch of `kernel` (completion-time
/// deltas), in launch order.
std::vector<SimTime> launch_costs(std::span<const TraceEvent> events,
                                  std::string_view kernel);

// ── scheme comparison ───────────────────────────────────────────────────────

struct CompareRow {
    SchemeKind scheme = SchemeKind::passthrough;
    SimTime sim_time = 0;
    double normalized = 0.0;  // device scheme = 1.0
    bool checksum_ok = false;
};

/// Runs all four schemes, validates each against the host oracle, and
/// normalizes simulated runtime to the device scheme.
std::vector<CompareRow> compare_schemes(const WorkloadSpec& spec,
                                        const DeviceModel& model);

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed);

}  // namespace upage::bench
