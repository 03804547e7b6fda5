#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace upage {

using RecordId = std::uint64_t;   // 0 is never a valid id
using HostAddr = std::uintptr_t;
using DeviceAddr = std::uint64_t;

/// Simulated time in integer femtoseconds. Integer deltas make the final
/// clock independent of the order concurrent contributions land in.
using SimTime = std::uint64_t;

constexpr double fs_to_seconds(SimTime t) { return static_cast<double>(t) * 1e-15; }

inline SimTime seconds_to_fs(double s) {
    return static_cast<SimTime>(std::llround(s * 1e15));
}

/// Time to move `bytes` at `gbps` (decimal GB/s), in femtoseconds.
inline SimTime transfer_fs(std::uint64_t bytes, double gbps) {
    return static_cast<SimTime>(std::llround(static_cast<double>(bytes) * 1e6 / gbps));
}

constexpr std::uint64_t round_up(std::uint64_t v, std::uint64_t multiple) {
    return (v + multiple - 1) / multiple * multiple;
}

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace upage
