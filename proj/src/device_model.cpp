#include "upage/device_model.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>

namespace upage {
namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Flat `key = value` config: quoted strings, booleans, numbers, # comments.
std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open device model file " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
            val = val.substr(1, val.size() - 2);
        if (key.empty() || val.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": empty key or value");
        kv[key] = val;
    }
    return kv;
}

double to_double(const std::string& key, const std::string& val) {
    char* end = nullptr;
    double d = std::strtod(val.c_str(), &end);
    if (end == val.c_str() || *end != '\0')
        throw ConfigError("device model key " + key + " has non-numeric value \"" +
                          val + "\"");
    return d;
}

bool to_bool(const std::string& key, const std::string& val) {
    if (val == "true") return true;
    if (val == "false") return false;
    throw ConfigError("device model key " + key + " must be true or false, got \"" +
                      val + "\"");
}

}  // namespace

void DeviceModel::validate() const {
    if (device_bw_gbps <= 0 || interconnect_bw_gbps <= 0 || fp32_gflops <= 0)
        throw ConfigError("device model rates must be positive");
    if (per_op_latency_s < 0)
        throw ConfigError("per-op latency cannot be negative");
    if (page_size == 0 || (page_size & (page_size - 1)) != 0)
        throw ConfigError("device model page size must be a power of two");
    if (capacity_bytes == 0) throw ConfigError("device capacity must be positive");
}

DeviceModel DeviceModel::from_file(const std::string& path) {
    DeviceModel m;
    auto kv = parse_kv_file(path);
    for (const auto& [key, val] : kv) {
        if (key == "name") m.name = val;
        else if (key == "device_bw_gbps") m.device_bw_gbps = to_double(key, val);
        else if (key == "interconnect_bw_gbps") m.interconnect_bw_gbps = to_double(key, val);
        else if (key == "fp32_gflops") m.fp32_gflops = to_double(key, val);
        else if (key == "per_op_latency_us") m.per_op_latency_s = to_double(key, val) * 1e-6;
        else if (key == "page_size") m.page_size = static_cast<std::uint64_t>(to_double(key, val));
        else if (key == "capacity_gib")
            m.capacity_bytes = static_cast<std::uint64_t>(to_double(key, val) * (1ull << 30));
        else if (key == "quirk_advise_misalign") m.quirk_advise_misalign = to_bool(key, val);
        else throw ConfigError("unknown device model key " + key + " in " + path);
    }
    m.validate();
    return m;
}

}  // namespace upage
