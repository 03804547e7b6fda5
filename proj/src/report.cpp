#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "upage/bench.hpp"

// Everything in this file is a pure function of a finished trace: the
// benchmark CLI and the tests derive all reported numbers from the event
// log rather than from engine internals.

namespace upage::bench {

Summary summarize(std::span<const TraceEvent> events, std::string scheme,
                  std::string workload) {
    Summary s;
    s.scheme = std::move(scheme);
    s.workload = std::move(workload);

    std::uint64_t last_launch_seq = 0;
    for (const TraceEvent& e : events) {
        switch (e.kind) {
            case EventKind::h2d: s.bytes_h2d += e.bytes; break;
            case EventKind::d2h: s.bytes_d2h += e.bytes; break;
            case EventKind::fault: ++s.faults; break;
            case EventKind::launch: last_launch_seq = e.seq; break;
            case EventKind::prefetch:
                // Residency moves through the prefetch verb are transfers too.
                if (e.label == "to_device") s.bytes_h2d += e.bytes;
                if (e.label == "to_host") s.bytes_d2h += e.bytes;
                break;
            default: break;
        }
    }
    if (!events.empty()) s.sim_time = events.back().clock;

    // Each event's cost is its clock minus the previous event's clock; the
    // sink emits one event per advance, so the deltas partition the timeline.
    struct Sample {
        SimTime delta;
        std::uint64_t bytes;
    };
    std::vector<std::pair<std::string, std::vector<Sample>>> kernels;
    SimTime prev = 0;
    for (const TraceEvent& e : events) {
        SimTime delta = e.clock - prev;
        prev = e.clock;
        if (e.kind == EventKind::d2h && e.seq > last_launch_seq)
            s.final_d2h_time += delta;
        if (e.kind != EventKind::launch) continue;
        auto it = std::find_if(kernels.begin(), kernels.end(),
                               [&](const auto& kv) { return kv.first == e.label; });
        if (it == kernels.end()) {
            kernels.emplace_back(e.label, std::vector<Sample>{});
            it = std::prev(kernels.end());
        }
        it->second.push_back({delta, e.bytes});
    }
    for (auto& [name, samples] : kernels) {
        KernelStats ks;
        ks.kernel = name;
        ks.launches = samples.size();
        // The first launch carries the cold migrations; skip it from the
        // steady-state bandwidth unless it is the only sample.
        std::size_t first = samples.size() > 1 ? 1 : 0;
        double sum = 0.0;
        std::uint64_t count = 0;
        for (std::size_t i = first; i < samples.size(); ++i) {
            if (samples[i].delta == 0 || samples[i].bytes == 0) continue;
            sum += static_cast<double>(samples[i].bytes) * 1e6 /
                   static_cast<double>(samples[i].delta);
            ++count;
        }
        if (count > 0) ks.eff_bw_gbps = sum / static_cast<double>(count);
        s.kernels.push_back(std::move(ks));
    }
    return s;
}

void write_csv(std::ostream& out, std::span<const Summary> rows) {
    out << "scheme,workload,kernel,bytes_h2d,bytes_d2h,faults,eff_bw,"
           "sim_time,final_d2h_time\n";
    for (const Summary& s : rows) {
        for (const KernelStats& k : s.kernels) {
            char bw[32];
            std::snprintf(bw, sizeof bw, "%.6f", k.eff_bw_gbps);
            out << s.scheme << ',' << s.workload << ',' << k.kernel << ','
                << s.bytes_h2d << ',' << s.bytes_d2h << ',' << s.faults << ','
                << bw << ',' << format_clock(s.sim_time) << ','
                << format_clock(s.final_d2h_time) << '\n';
        }
    }
}

void write_csv_file(const std::string& path, std::span<const Summary> rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open csv output: " + path);
    write_csv(out, rows);
    out.flush();
    if (!out) throw Error("failed writing csv output: " + path);
}

std::vector<SimTime> launch_costs(std::span<const TraceEvent> events,
                                  std::string_view kernel) {
    std::vector<SimTime> costs;
    SimTime prev = 0;
    for (const TraceEvent& e : events) {
        SimTime delta = e.clock - prev;
        prev = e.clock;
        if (e.kind == EventKind::launch && e.label == kernel)
            costs.push_back(delta);
    }
    return costs;
}

SimTime steady_iteration_time(std::span<const TraceEvent> events,
                              std::string_view kernel) {
    SimTime last = 0, second_last = 0;
    std::uint64_t seen = 0;
    for (const TraceEvent& e : events) {
        if (e.kind != EventKind::launch || e.label != kernel) continue;
        second_last = last;
        last = e.clock;
        ++seen;
    }
    if (seen < 2) return 0;
    return last - second_last;
}

std::vector<CompareRow> compare_schemes(const WorkloadSpec& spec,
                                        const DeviceModel& model) {
    const std::string oracle = host_oracle_checksum(spec);
    const SchemeKind order[] = {SchemeKind::mirror, SchemeKind::device,
                                SchemeKind::advise, SchemeKind::passthrough};

    std::vector<CompareRow> rows;
    std::string mismatches;
    SimTime device_time = 0;
    for (SchemeKind scheme : order) {
        RunResult r = run_workload(spec, scheme, model);
        CompareRow row;
        row.scheme = scheme;
        row.sim_time = r.events.empty() ? 0 : r.events.back().clock;
        row.checksum_ok = (r.checksum == oracle);
        if (!row.checksum_ok) {
            mismatches += std::string("\n  ") + to_string(scheme) + ": got " +
                          r.checksum + ", expected " + oracle;
        }
        if (scheme == SchemeKind::device) device_time = row.sim_time;
        rows.push_back(row);
    }
    if (!mismatches.empty())
        throw Error("coherence failure against host oracle for workload " +
                    std::string(to_string(spec.kind)) + ":" + mismatches);
    for (CompareRow& row : rows) {
        row.normalized = device_time > 0 ? static_cast<double>(row.sim_time) /
                                               static_cast<double>(device_time)
                                         : 0.0;
    }
    return rows;
}

}  // namespace upage::bench
