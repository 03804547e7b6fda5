#include "upage/trace.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace upage {

const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::alloc: return "alloc";
        case EventKind::free_mem: return "free";
        case EventKind::h2d: return "h2d";
        case EventKind::d2h: return "d2h";
        case EventKind::fault: return "fault";
        case EventKind::launch: return "launch";
        case EventKind::advise: return "advise";
        case EventKind::prefetch: return "prefetch";
        case EventKind::warning: return "warning";
    }
    return "?";
}

EventKind event_kind_from_string(std::string_view s) {
    if (s == "alloc") return EventKind::alloc;
    if (s == "free") return EventKind::free_mem;
    if (s == "h2d") return EventKind::h2d;
    if (s == "d2h") return EventKind::d2h;
    if (s == "fault") return EventKind::fault;
    if (s == "launch") return EventKind::launch;
    if (s == "advise") return EventKind::advise;
    if (s == "prefetch") return EventKind::prefetch;
    if (s == "warning") return EventKind::warning;
    throw Error("unknown trace event kind: " + std::string(s));
}

TraceSink::Stamp TraceSink::stamp(SimTime advance) {
    while (stamp_lock_.test_and_set(std::memory_order_acquire)) {
#if defined(__x86_64__) || defined(__i386__)
        __builtin_ia32_pause();
#endif
    }
    std::uint64_t seq = next_seq_.fetch_add(1, std::memory_order_relaxed);
    SimTime clock = clock_fs_.load(std::memory_order_relaxed) + advance;
    clock_fs_.store(clock, std::memory_order_release);
    stamp_lock_.clear(std::memory_order_release);
    return {seq, clock};
}

void TraceSink::emit(EventKind kind, RecordId record, std::uint64_t bytes,
                     std::string_view label, SimTime advance) {
    Stamp s = stamp(advance);
    std::lock_guard<std::mutex> lock(log_mutex_);
    log_.push_back(TraceEvent{s.seq, s.clock, kind, record, bytes, std::string(label)});
}

bool TraceSink::emit_from_fault(EventKind kind, RecordId record, std::uint64_t bytes,
                                const char* static_label, SimTime advance) {
    Stamp s = stamp(advance);
    std::size_t idx = ring_claimed_.fetch_add(1, std::memory_order_acq_rel);
    if (idx >= kRingSlots) {
        overflow_.store(true, std::memory_order_release);
        return false;
    }
    RingSlot& slot = ring_[idx];
    slot.clock = s.clock;
    slot.kind = kind;
    slot.record = record;
    slot.bytes = bytes;
    slot.label = static_label;
    slot.ready.store(s.seq + 1, std::memory_order_release);
    return true;
}

void TraceSink::drain() {
    std::lock_guard<std::mutex> lock(log_mutex_);
    std::size_t claimed = std::min(ring_claimed_.load(std::memory_order_acquire), kRingSlots);
    while (ring_drained_ < claimed) {
        RingSlot& slot = ring_[ring_drained_];
        std::uint64_t ready = slot.ready.load(std::memory_order_acquire);
        if (ready == 0) break;  // writer mid-flight; pick it up next drain
        log_.push_back(TraceEvent{ready - 1, slot.clock, slot.kind, slot.record,
                                  slot.bytes, slot.label ? slot.label : ""});
        ++ring_drained_;
    }
}

std::vector<TraceEvent> TraceSink::events() {
    drain();
    std::lock_guard<std::mutex> lock(log_mutex_);
    std::vector<TraceEvent> out = log_;
    std::sort(out.begin(), out.end(),
              [](const TraceEvent& a, const TraceEvent& b) { return a.seq < b.seq; });
    return out;
}

std::size_t TraceSink::size() {
    drain();
    std::lock_guard<std::mutex> lock(log_mutex_);
    return log_.size();
}

std::string format_clock(SimTime fs) {
    char buf[48];
    constexpr SimTime fs_per_s = 1000000000000000;
    std::snprintf(buf, sizeof(buf), "%" PRIu64 ".%015" PRIu64,
                  static_cast<std::uint64_t>(fs / fs_per_s),
                  static_cast<std::uint64_t>(fs % fs_per_s));
    return buf;
}

SimTime parse_clock(std::string_view s) {
    auto dot = s.find('.');
    if (dot == std::string_view::npos || dot == 0 || s.size() - dot - 1 != 15)
        throw Error("bad clock literal: " + std::string(s));
    std::uint64_t sec = 0, frac = 0;
    for (std::size_t i = 0; i < dot; ++i) {
        if (s[i] < '0' || s[i] > '9') throw Error("bad clock literal: " + std::string(s));
        sec = sec * 10 + static_cast<std::uint64_t>(s[i] - '0');
    }
    for (std::size_t i = dot + 1; i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9') throw Error("bad clock literal: " + std::string(s));
        frac = frac * 10 + static_cast<std::uint64_t>(s[i] - '0');
    }
    return sec * 1000000000000000ULL + frac;
}

namespace {

void append_json_string(std::string& out, std::string_view s) {
    out += '"';
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char esc[8];
                    std::snprintf(esc, sizeof(esc), "\\u%04x", c);
                    out += esc;
                } else {
                    out += c;
                }
        }
    }
    out += '"';
}

}  // namespace

void write_jsonl(std::ostream& out, std::span<const TraceEvent> events) {
    std::string line;
    for (const TraceEvent& e : events) {
        line.clear();
        line += "{\"seq\":" + std::to_string(e.seq);
        line += ",\"clock\":\"" + format_clock(e.clock) + "\"";
        line += ",\"kind\":\"";
        line += to_string(e.kind);
        line += "\",\"record\":" + std::to_string(e.record);
        line += ",\"bytes\":" + std::to_string(e.bytes);
        line += ",\"label\":";
        append_json_string(line, e.label);
        line += "}\n";
        out << line;
    }
}

void write_jsonl_file(const std::string& path, std::span<const TraceEvent> events) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open trace file for writing: " + path);
    write_jsonl(out, events);
    out.flush();
    if (!out) throw Error("error writing trace file: " + path);
}

std::vector<TraceEvent> read_jsonl(std::istream& in) {
    std::vector<TraceEvent> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& ex) {
            throw Error("trace line " + std::to_string(lineno) + ": " + ex.what());
        }
        TraceEvent e;
        e.seq = j.at("seq").get<std::uint64_t>();
        e.clock = parse_clock(j.at("clock").get<std::string>());
        e.kind = event_kind_from_string(j.at("kind").get<std::string>());
        e.record = j.at("record").get<std::uint64_t>();
        e.bytes = j.at("bytes").get<std::uint64_t>();
        e.label = j.at("label").get<std::string>();
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<TraceEvent> read_jsonl_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open trace file: " + path);
    return read_jsonl(in);
}

}  // namespace upage
