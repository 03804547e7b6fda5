#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "upage/bench.hpp"
#include "upage/code_object.hpp"
#include "upage/interposer.hpp"

// Command-line front end: `upage bench` runs one workload under one scheme
// and validates it against the host oracle, `upage compare` races all four
// schemes, `upage meta dump` pretty-prints the metadata note of a code
// object image. Exit status 0 means every executed validation passed.

namespace {

using namespace upage;
using namespace upage::bench;

std::string seconds(SimTime fs) { return format_clock(fs); }

DeviceModel load_model(const std::string& path, const std::string& quirk) {
    DeviceModel model;
    if (!path.empty()) model = DeviceModel::from_file(path);
    if (quirk == "on") model.quirk_advise_misalign = true;
    if (quirk == "off") model.quirk_advise_misalign = false;
    return model;
}

WorkloadSpec build_spec(const std::string& workload, std::uint64_t elems,
                        std::uint64_t grid, std::uint64_t poses,
                        std::uint64_t iterations, std::uint64_t cadence) {
    WorkloadSpec spec = WorkloadSpec::defaults(workload_from_string(workload));
    if (elems) spec.elems = elems;
    if (grid) spec.grid = grid;
    if (poses) spec.poses = poses;
    if (iterations) spec.iterations = iterations;
    if (cadence) spec.cadence = cadence;
    return spec;
}

int run_bench(const std::string& workload, const std::string& scheme_name,
              const DeviceModel& model, const WorkloadSpec& spec,
              const std::string& trace_path, const std::string& csv_path) {
    SchemeKind scheme = scheme_from_string(scheme_name);
    RunResult result = run_workload(spec, scheme, model);
    std::string oracle = host_oracle_checksum(spec);
    bool ok = result.checksum == oracle;

    if (!trace_path.empty()) write_jsonl_file(trace_path, result.events);
    Summary summary = summarize(result.events, to_string(scheme), workload);
    if (!csv_path.empty()) {
        std::vector<Summary> rows{summary};
        write_csv_file(csv_path, rows);
    }

    std::printf("workload      %s\n", workload.c_str());
    std::printf("scheme        %s\n", to_string(scheme));
    std::printf("model         %s\n", model.name.c_str());
    std::printf("sim_time_s    %s\n", seconds(summary.sim_time).c_str());
    std::printf("bytes_h2d     %llu\n",
                static_cast<unsigned long long>(summary.bytes_h2d));
    std::printf("bytes_d2h     %llu\n",
                static_cast<unsigned long long>(summary.bytes_d2h));
    std::printf("faults        %llu\n",
                static_cast<unsigned long long>(summary.faults));
    std::printf("final_d2h_s   %s\n", seconds(summary.final_d2h_time).c_str());
    for (const KernelStats& k : summary.kernels) {
        std::printf("kernel        %-16s launches %-6llu eff_bw_gbps %.3f\n",
                    k.kernel.c_str(),
                    static_cast<unsigned long long>(k.launches), k.eff_bw_gbps);
    }
    std::printf("checksum      %s (%s)\n", result.checksum.c_str(),
                ok ? "matches host oracle" : "MISMATCH");
    if (!ok) {
        std::fprintf(stderr, "error: checksum mismatch, oracle %s got %s\n",
                     oracle.c_str(), result.checksum.c_str());
        return 1;
    }
    return 0;
}

int run_compare(const std::string& workload, const DeviceModel& model,
                const WorkloadSpec& spec) {
    std::vector<CompareRow> rows = compare_schemes(spec, model);
    std::printf("workload %s on %s\n", workload.c_str(), model.name.c_str());
    std::printf("%-12s %-22s %-10s %s\n", "scheme", "sim_time_s", "vs_device",
                "coherent");
    for (const CompareRow& row : rows) {
        std::printf("%-12s %-22s %-10.3f %s\n", to_string(row.scheme),
                    seconds(row.sim_time).c_str(), row.normalized,
                    row.checksum_ok ? "yes" : "NO");
    }
    return 0;
}

int run_meta_emit(const std::string& path) {
    std::vector<KernelDescriptor> descs(2);
    descs[0].mangled_name = "sample_saxpy";
    descs[0].kernarg_segment_size = 32;
    descs[0].args = {{0, 8, ValueKind::global_buffer_address},
                     {8, 8, ValueKind::global_buffer_address},
                     {16, 8, ValueKind::by_value},
                     {24, 8, ValueKind::hidden}};
    descs[1].mangled_name = "sample_reduce";
    descs[1].kernarg_segment_size = 16;
    descs[1].args = {{0, 16, ValueKind::by_value}};
    std::vector<std::byte> image = emit_code_object(descs);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open output " + path);
    out.write(reinterpret_cast<const char*>(image.data()),
              static_cast<std::streamsize>(image.size()));
    if (!out) throw Error("failed writing " + path);
    std::printf("wrote %zu-byte code object to %s\n", image.size(),
                path.c_str());
    return 0;
}

int run_meta_dump(const std::string& path) {
    std::vector<std::string> warnings;
    DescriptorSet descs = parse_code_object_file(path, &warnings);
    for (const std::string& w : warnings)
        std::fprintf(stderr, "warning: %s\n", w.c_str());

    nlohmann::ordered_json doc;
    doc["kernels"] = nlohmann::ordered_json::array();
    for (const auto& [name, d] : descs) {
        nlohmann::ordered_json k;
        k["name"] = d.mangled_name;
        k["kernarg_segment_size"] = d.kernarg_segment_size;
        k["args"] = nlohmann::ordered_json::array();
        for (const ArgField& a : d.args) {
            nlohmann::ordered_json arg;
            arg["offset"] = a.offset;
            arg["size"] = a.size;
            arg["kind"] = to_string(a.kind);
            k["args"].push_back(arg);
        }
        doc["kernels"].push_back(k);
    }
    std::printf("%s\n", doc.dump(2).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transparent-paging coherence engine benchmark"};
    app.require_subcommand(1);

    const char* env_mode = std::getenv("UPAGE_MODE");
    std::string default_scheme = env_mode && *env_mode ? env_mode : "mirror";

    std::string workload = "stream";
    std::string scheme = default_scheme;
    std::string model_path;
    std::string quirk;
    std::string trace_path;
    std::string csv_path;
    std::uint64_t elems = 0, grid = 0, poses = 0, iterations = 0, cadence = 0;

    auto add_workload_opts = [&](CLI::App* cmd) {
        cmd->add_option("--workload", workload,
                        "stream | cg | hydro | dock")->capture_default_str();
        cmd->add_option("--model", model_path, "device model file");
        cmd->add_option("--advise-quirk", quirk,
                        "override the model's advise quirk (on | off)")
            ->check(CLI::IsMember({"on", "off"}));
        cmd->add_option("--elems", elems, "stream array elements");
        cmd->add_option("--grid", grid, "cg / hydro grid edge");
        cmd->add_option("--poses", poses, "dock poses per launch");
        cmd->add_option("--iterations", iterations, "outer iterations");
        cmd->add_option("--cadence", cadence, "hydro host-reduction cadence");
    };

    CLI::App* bench = app.add_subcommand("bench", "run one workload and scheme");
    add_workload_opts(bench);
    bench->add_option("--scheme", scheme,
                      "mirror | device | advise | passthrough")
        ->capture_default_str();
    bench->add_option("--trace", trace_path, "JSONL event trace output");
    bench->add_option("--csv", csv_path, "summary CSV output");

    CLI::App* compare =
        app.add_subcommand("compare", "run all schemes and compare");
    add_workload_opts(compare);

    CLI::App* meta = app.add_subcommand("meta", "code object metadata tools");
    meta->require_subcommand(1);
    std::string object_path;
    CLI::App* dump = meta->add_subcommand("dump", "print the metadata note");
    dump->add_option("object", object_path, "code object file")->required();
    std::string emit_path;
    CLI::App* emit =
        meta->add_subcommand("emit", "write a sample code object for dump");
    emit->add_option("output", emit_path, "output file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (bench->parsed()) {
            DeviceModel model = load_model(model_path, quirk);
            WorkloadSpec spec =
                build_spec(workload, elems, grid, poses, iterations, cadence);
            return run_bench(workload, scheme, model, spec, trace_path,
                             csv_path);
        }
        if (compare->parsed()) {
            DeviceModel model = load_model(model_path, quirk);
            WorkloadSpec spec =
                build_spec(workload, elems, grid, poses, iterations, cadence);
            return run_compare(workload, model, spec);
        }
        if (meta->parsed() && dump->parsed()) return run_meta_dump(object_path);
        if (meta->parsed() && emit->parsed()) return run_meta_emit(emit_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
