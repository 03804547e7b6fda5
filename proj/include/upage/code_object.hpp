#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "upage/common.hpp"

namespace upage {

/// Structured failure while decoding a code-object image or its metadata
/// payload. `offset` is the byte position the decoder was at.
class CodeObjectError : public Error {
public:
    CodeObjectError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// ── metadata document (binary key-value encoding) ──────────────────────────
//
// The note payload is a self-describing document in the MessagePack wire
// format, restricted to the types the metadata actually uses: maps, arrays,
// strings and unsigned integers.

struct MsgValue;
using MsgArray = std::vector<MsgValue>;
using MsgMap = std::vector<std::pair<std::string, MsgValue>>;  // order-preserving

struct MsgValue {
    std::variant<std::uint64_t, std::string, MsgArray, MsgMap> v;

    MsgValue() : v(std::uint64_t{0}) {}
    MsgValue(std::uint64_t u) : v(u) {}
    MsgValue(std::string s) : v(std::move(s)) {}
    MsgValue(const char* s) : v(std::string(s)) {}
    MsgValue(MsgArray a) : v(std::move(a)) {}
    MsgValue(MsgMap m) : v(std::move(m)) {}

    bool is_uint() const { return std::holds_alternative<std::uint64_t>(v); }
    bool is_str() const { return std::holds_alternative<std::string>(v); }
    bool is_array() const { return std::holds_alternative<MsgArray>(v); }
    bool is_map() const { return std::holds_alternative<MsgMap>(v); }

    std::uint64_t as_uint() const { return std::get<std::uint64_t>(v); }
    const std::string& as_str() const { return std::get<std::string>(v); }
    const MsgArray& as_array() const { return std::get<MsgArray>(v); }
    const MsgMap& as_map() const { return std::get<MsgMap>(v); }

    /// Map lookup by key; nullptr if absent or not a map.
    const MsgValue* get(std::string_view key) const;

    bool operator==(const MsgValue&) const = default;
};

std::vector<std::byte> msg_encode(const MsgValue& value);
/// Decodes exactly one value spanning the whole buffer; trailing bytes or
/// truncation are errors. Total: any input yields a value or a
/// CodeObjectError, never a crash or unbounded allocation.
MsgValue msg_decode(const std::byte* data, std::size_t len);

// ── kernel descriptors ──────────────────────────────────────────────────────

enum class ValueKind : std::uint8_t { global_buffer_address, by_value, hidden };

const char* to_string(ValueKind k);

struct ArgField {
    std::uint32_t offset = 0;
    std::uint32_t size = 0;
    ValueKind kind = ValueKind::hidden;

    bool operator==(const ArgField&) const = default;
};

struct KernelDescriptor {
    std::string mangled_name;
    std::uint32_t kernarg_segment_size = 0;
    std::vector<ArgField> args;  // sorted by offset, disjoint

    /// Throws CodeObjectError if the field invariants do not hold.
    void validate() const;

    bool operator==(const KernelDescriptor&) const = default;
};

using DescriptorSet = std::map<std::string, KernelDescriptor>;

/// Builds a minimal relocatable ELF64 image whose vendor note section carries
/// the metadata for `kernels`. parse_code_object inverts it exactly.
std::vector<std::byte> emit_code_object(const std::vector<KernelDescriptor>& kernels);

/// Extracts kernel descriptors from the vendor metadata note of an ELF image.
/// Unknown value kinds demote to hidden and append a note to `warnings` when
/// given. Throws CodeObjectError on malformed input or when no metadata note
/// is present.
DescriptorSet parse_code_object(const std::byte* data, std::size_t len,
                                std::vector<std::string>* warnings = nullptr);
DescriptorSet parse_code_object(const std::vector<std::byte>& image,
                                std::vector<std::string>* warnings = nullptr);

DescriptorSet parse_code_object_file(const std::string& path,
                                     std::vector<std::string>* warnings = nullptr);

/// Byte offset at which a raw runtime-module structure stores the pointer to
/// its kernel name. Configurable because it is a private layout detail; this
/// default matches the structure the tests synthesize.
inline constexpr std::size_t kRawNameOffset = 144;

/// Reads a NUL-terminated name through the char* found `name_offset` bytes
/// into a raw module structure. The caller guarantees the structure is at
/// least name_offset + 8 bytes.
std::string read_raw_module_name(const void* module_struct,
                                 std::size_t name_offset = kRawNameOffset);

// ── handle → descriptor table ───────────────────────────────────────────────

/// Associates launch handles with parsed descriptors. Concurrent reads,
/// serialized writes.
class RegistrationTable {
public:
    /// Merges a parsed descriptor set. Redefining a kernel name with a
    /// different descriptor is an error; identical redefinition is a no-op.
    void add_descriptors(const DescriptorSet& set);

    /// Binds a handle to a kernel name. Idempotent for the same name;
    /// rebinding a handle to a different name or naming an unparsed kernel
    /// is an error.
    void register_handle(const void* handle, std::string_view name);

    const KernelDescriptor& resolve(const void* handle) const;
    const KernelDescriptor& find_by_name(std::string_view name) const;
    bool has_kernel(std::string_view name) const;

    /// Resolution path for raw module structures that embed a name pointer.
    const KernelDescriptor& resolve_raw(const void* module_struct,
                                        std::size_t name_offset = kRawNameOffset) const;

    std::size_t kernel_count() const;
    std::size_t handle_count() const;
    std::vector<std::string> kernel_names() const;

private:
    mutable std::mutex mutex_;
    DescriptorSet descriptors_;
    std::unordered_map<const void*, std::string> handles_;
};

}  // namespace upage
