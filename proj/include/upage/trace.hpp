#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "upage/common.hpp"

namespace upage {

enum class EventKind : std::uint8_t {
    alloc,
    free_mem,
    h2d,
    d2h,
    fault,
    launch,
    advise,
    prefetch,
    warning,
};

const char* to_string(EventKind k);
EventKind event_kind_from_string(std::string_view s);

struct TraceEvent {
    std::uint64_t seq = 0;
    SimTime clock = 0;       // femtoseconds
    EventKind kind = EventKind::warning;
    RecordId record = 0;     // 0 = none
    std::uint64_t bytes = 0; // 0 = none
    std::string label;

    friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

/// Append-only event log that also owns the simulated clock, so that
/// (seq, clock) pairs are stamped atomically and the file stays monotone
/// in both. Two emission paths:
///   - emit():           normal context, may allocate.
///   - emit_from_fault(): signal context. Writes into a pre-sized slot
///     ring, never allocates; the label must point at static storage.
class TraceSink {
public:
    TraceSink() = default;
    TraceSink(const TraceSink&) = delete;
    TraceSink& operator=(const TraceSink&) = delete;

    /// Advances the clock by `advance` and appends one event stamped with
    /// the post-advance clock.
    void emit(EventKind kind, RecordId record, std::uint64_t bytes,
              std::string_view label, SimTime advance = 0);

    bool emit_from_fault(EventKind kind, RecordId record, std::uint64_t bytes,
                         const char* static_label, SimTime advance = 0);

    SimTime now() const { return clock_fs_.load(std::memory_order_acquire); }

    /// Moves completed fault-ring entries into the main log. Normal context.
    void drain();

    /// Drained events, sorted by seq.
    std::vector<TraceEvent> events();

    std::size_t size();
    bool overflowed() const { return overflow_.load(std::memory_order_acquire); }

private:
    struct Stamp {
        std::uint64_t seq;
        SimTime clock;
    };
    Stamp stamp(SimTime advance);

    static constexpr std::size_t kRingSlots = 1 << 15;
    struct RingSlot {
        std::atomic<std::uint64_t> ready{0};  // seq + 1 once written
        SimTime clock = 0;
        EventKind kind = EventKind::warning;
        RecordId record = 0;
        std::uint64_t bytes = 0;
        const char* label = nullptr;
    };

    std::atomic<std::uint64_t> next_seq_{1};
    std::atomic<SimTime> clock_fs_{0};
    std::atomic_flag stamp_lock_ = ATOMIC_FLAG_INIT;

    RingSlot ring_[kRingSlots];
    std::atomic<std::size_t> ring_claimed_{0};
    std::size_t ring_drained_ = 0;
    std::atomic<bool> overflow_{false};

    std::mutex log_mutex_;
    std::vector<TraceEvent> log_;
};

/// Exact decimal seconds with 15 fractional digits; round-trips to the
/// femtosecond integer without floating-point involvement.
std::string format_clock(SimTime fs);
SimTime parse_clock(std::string_view s);

void write_jsonl(std::ostream& out, std::span<const TraceEvent> events);
void write_jsonl_file(const std::string& path, std::span<const TraceEvent> events);
std::vector<TraceEvent> read_jsonl(std::istream& in);
std::vector<TraceEvent> read_jsonl_file(const std::string& path);

}  // namespace upage
