#include "upage/code_object.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace upage {
namespace {

// ── document encoding ───────────────────────────────────────────────────────

void put_u8(std::vector<std::byte>& out, std::uint8_t b) {
    out.push_back(static_cast<std::byte>(b));
}

void put_be(std::vector<std::byte>& out, std::uint64_t v, int bytes) {
    for (int i = bytes - 1; i >= 0; --i)
        put_u8(out, static_cast<std::uint8_t>(v >> (8 * i)));
}

void encode_value(std::vector<std::byte>& out, const MsgValue& val) {
    if (val.is_uint()) {
        std::uint64_t u = val.as_uint();
        if (u < 0x80) {
            put_u8(out, static_cast<std::uint8_t>(u));
        } else if (u <= 0xff) {
            put_u8(out, 0xcc);
            put_be(out, u, 1);
        } else if (u <= 0xffff) {
            put_u8(out, 0xcd);
            put_be(out, u, 2);
        } else if (u <= 0xffffffffull) {
            put_u8(out, 0xce);
            put_be(out, u, 4);
        } else {
            put_u8(out, 0xcf);
            put_be(out, u, 8);
        }
    } else if (val.is_str()) {
        const std::string& s = val.as_str();
        if (s.size() < 32) {
            put_u8(out, static_cast<std::uint8_t>(0xa0 | s.size()));
        } else if (s.size() <= 0xff) {
            put_u8(out, 0xd9);
            put_be(out, s.size(), 1);
        } else if (s.size() <= 0xffff) {
            put_u8(out, 0xda);
            put_be(out, s.size(), 2);
        } else {
            put_u8(out, 0xdb);
            put_be(out, s.size(), 4);
        }
        for (char c : s) put_u8(out, static_cast<std::uint8_t>(c));
    } else if (val.is_array()) {
        const MsgArray& a = val.as_array();
        if (a.size() < 16) {
            put_u8(out, static_cast<std::uint8_t>(0x90 | a.size()));
        } else if (a.size() <= 0xffff) {
            put_u8(out, 0xdc);
            put_be(out, a.size(), 2);
        } else {
            put_u8(out, 0xdd);
            put_be(out, a.size(), 4);
        }
        for (const MsgValue& e : a) encode_value(out, e);
    } else {
        const MsgMap& m = val.as_map();
        if (m.size() < 16) {
            put_u8(out, static_cast<std::uint8_t>(0x80 | m.size()));
        } else if (m.size() <= 0xffff) {
            put_u8(out, 0xde);
            put_be(out, m.size(), 2);
        } else {
            put_u8(out, 0xdf);
            put_be(out, m.size(), 4);
        }
        for (const auto& [k, v] : m) {
            encode_value(out, MsgValue(k));
            encode_value(out, v);
        }
    }
}

class MsgDecoder {
public:
    MsgDecoder(const std::byte* data, std::size_t len) : data_(data), len_(len) {}

    MsgValue decode_all() {
        MsgValue v = decode(0);
        if (pos_ != len_)
            throw CodeObjectError("trailing bytes after metadata document", pos_);
        return v;
    }

private:
    [[noreturn]] void fail(const char* what) const {
        throw CodeObjectError(what, pos_);
    }

    std::uint8_t take() {
        if (pos_ >= len_) fail("truncated metadata document");
        return static_cast<std::uint8_t>(data_[pos_++]);
    }

    std::uint64_t take_be(int bytes) {
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v = (v << 8) | take();
        return v;
    }

    std::string take_str(std::size_t n) {
        if (n > len_ - pos_) fail("string length exceeds payload");
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }

    MsgValue decode(int depth) {
        if (depth > 32) fail("metadata nesting too deep");
        std::uint8_t tag = take();
        if (tag < 0x80) return MsgValue(std::uint64_t{tag});
        if (tag >= 0xa0 && tag < 0xc0) return MsgValue(take_str(tag & 0x1f));
        if ((tag & 0xf0) == 0x90) return decode_array(tag & 0x0f, depth);
        if ((tag & 0xf0) == 0x80) return decode_map(tag & 0x0f, depth);
        switch (tag) {
            case 0xcc: return MsgValue(take_be(1));
            case 0xcd: return MsgValue(take_be(2));
            case 0xce: return MsgValue(take_be(4));
            case 0xcf: return MsgValue(take_be(8));
            case 0xd9: return MsgValue(take_str(take_be(1)));
            case 0xda: return MsgValue(take_str(take_be(2)));
            case 0xdb: return MsgValue(take_str(take_be(4)));
            case 0xdc: return decode_array(take_be(2), depth);
            case 0xdd: return decode_array(take_be(4), depth);
            case 0xde: return decode_map(take_be(2), depth);
            case 0xdf: return decode_map(take_be(4), depth);
            default: fail("unsupported metadata type tag");
        }
    }

    MsgValue decode_array(std::uint64_t n, int depth) {
        // Each element costs at least one byte; reject counts the remaining
        // payload cannot possibly satisfy before reserving anything.
        if (n > len_ - pos_) fail("array length exceeds payload");
        MsgArray a;
        a.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) a.push_back(decode(depth + 1));
        return MsgValue(std::move(a));
    }

    MsgValue decode_map(std::uint64_t n, int depth) {
        if (n > (len_ - pos_) / 2) fail("map length exceeds payload");
        MsgMap m;
        m.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            MsgValue key = decode(depth + 1);
            if (!key.is_str()) fail("map key is not a string");
            m.emplace_back(std::move(std::get<std::string>(key.v)), decode(depth + 1));
        }
        return MsgValue(std::move(m));
    }

    const std::byte* data_;
    std::size_t len_;
    std::size_t pos_ = 0;
};

// ── ELF64 container ─────────────────────────────────────────────────────────
//
// Just enough of the object-file format to carry one vendor note section:
// header, a NOTE section, a string table, and the section header table.

constexpr std::uint8_t kElfMagic[4] = {0x7f, 'E', 'L', 'F'};
constexpr std::uint16_t kSectionNote = 7;     // SHT_NOTE
constexpr std::uint32_t kNoteTypeMetadata = 32;
constexpr char kNoteVendor[] = "AMDGPU";      // 6 chars + NUL

struct Elf64Header {
    std::uint8_t ident[16];
    std::uint16_t type;
    std::uint16_t machine;
    std::uint32_t version;
    std::uint64_t entry;
    std::uint64_t phoff;
    std::uint64_t shoff;
    std::uint32_t flags;
    std::uint16_t ehsize;
    std::uint16_t phentsize;
    std::uint16_t phnum;
    std::uint16_t shentsize;
    std::uint16_t shnum;
    std::uint16_t shstrndx;
};
static_assert(sizeof(Elf64Header) == 64);

struct Elf64SectionHeader {
    std::uint32_t name;
    std::uint32_t type;
    std::uint64_t flags;
    std::uint64_t addr;
    std::uint64_t offset;
    std::uint64_t size;
    std::uint32_t link;
    std::uint32_t info;
    std::uint64_t addralign;
    std::uint64_t entsize;
};
static_assert(sizeof(Elf64SectionHeader) == 64);

struct Elf64NoteHeader {
    std::uint32_t namesz;
    std::uint32_t descsz;
    std::uint32_t type;
};
static_assert(sizeof(Elf64NoteHeader) == 12);

std::size_t align4(std::size_t n) { return (n + 3) & ~std::size_t{3}; }

const char* value_kind_wire_name(ValueKind k) {
    switch (k) {
        case ValueKind::global_buffer_address: return "global_buffer";
        case ValueKind::by_value: return "by_value";
        case ValueKind::hidden: return "hidden_none";
    }
    return "hidden_none";
}

ValueKind value_kind_from_wire(const std::string& s,
                               std::vector<std::string>* warnings) {
    if (s == "global_buffer") return ValueKind::global_buffer_address;
    if (s == "by_value") return ValueKind::by_value;
    if (s.rfind("hidden_", 0) == 0) return ValueKind::hidden;
    if (warnings)
        warnings->push_back("unknown argument value kind \"" + s +
                            "\", treating as hidden");
    return ValueKind::hidden;
}

MsgValue metadata_document(const std::vector<KernelDescriptor>& kernels) {
    MsgArray kernel_list;
    for (const KernelDescriptor& k : kernels) {
        MsgArray args;
        for (const ArgField& a : k.args) {
            MsgMap am;
            am.emplace_back(".offset", MsgValue(std::uint64_t{a.offset}));
            am.emplace_back(".size", MsgValue(std::uint64_t{a.size}));
            am.emplace_back(".value_kind", MsgValue(value_kind_wire_name(a.kind)));
            args.emplace_back(std::move(am));
        }
        MsgMap km;
        km.emplace_back(".args", MsgValue(std::move(args)));
        km.emplace_back(".kernarg_segment_size",
                        MsgValue(std::uint64_t{k.kernarg_segment_size}));
        km.emplace_back(".name", MsgValue(k.mangled_name));
        kernel_list.emplace_back(std::move(km));
    }
    MsgMap root;
    root.emplace_back("amdhsa.kernels", MsgValue(std::move(kernel_list)));
    root.emplace_back("amdhsa.version",
                      MsgValue(MsgArray{MsgValue(std::uint64_t{1}),
                                        MsgValue(std::uint64_t{2})}));
    return MsgValue(std::move(root));
}

std::uint64_t require_uint(const MsgValue* v, const char* what) {
    if (!v || !v->is_uint())
        throw CodeObjectError(std::string("metadata missing or mistyped field ") + what, 0);
    return v->as_uint();
}

DescriptorSet descriptors_from_document(const MsgValue& doc,
                                        std::vector<std::string>* warnings) {
    const MsgValue* kernels = doc.get("amdhsa.kernels");
    if (!kernels || !kernels->is_array())
        throw CodeObjectError("metadata document lacks a kernel list", 0);

    DescriptorSet out;
    for (const MsgValue& kv : kernels->as_array()) {
        if (!kv.is_map())
            throw CodeObjectError("kernel metadata entry is not a map", 0);
        KernelDescriptor d;
        const MsgValue* name = kv.get(".name");
        if (!name || !name->is_str())
            throw CodeObjectError("kernel metadata entry lacks a name", 0);
        d.mangled_name = name->as_str();
        d.kernarg_segment_size = static_cast<std::uint32_t>(
            require_uint(kv.get(".kernarg_segment_size"), ".kernarg_segment_size"));
        if (const MsgValue* args = kv.get(".args")) {
            if (!args->is_array())
                throw CodeObjectError("kernel .args is not a list", 0);
            for (const MsgValue& av : args->as_array()) {
                if (!av.is_map())
                    throw CodeObjectError("argument metadata entry is not a map", 0);
                ArgField f;
                f.offset = static_cast<std::uint32_t>(
                    require_uint(av.get(".offset"), ".offset"));
                f.size = static_cast<std::uint32_t>(
                    require_uint(av.get(".size"), ".size"));
                const MsgValue* vk = av.get(".value_kind");
                if (!vk || !vk->is_str())
                    throw CodeObjectError("argument entry lacks a value kind", 0);
                f.kind = value_kind_from_wire(vk->as_str(), warnings);
                d.args.push_back(f);
            }
        }
        std::stable_sort(d.args.begin(), d.args.end(),
                         [](const ArgField& a, const ArgField& b) {
                             return a.offset < b.offset;
                         });
        d.validate();
        if (!out.emplace(d.mangled_name, std::move(d)).second)
            throw CodeObjectError("duplicate kernel name in metadata", 0);
    }
    return out;
}

}  // namespace

const MsgValue* MsgValue::get(std::string_view key) const {
    if (!is_map()) return nullptr;
    for (const auto& [k, v] : as_map())
        if (k == key) return &v;
    return nullptr;
}

std::vector<std::byte> msg_encode(const MsgValue& value) {
    std::vector<std::byte> out;
    encode_value(out, value);
    return out;
}

MsgValue msg_decode(const std::byte* data, std::size_t len) {
    return MsgDecoder(data, len).decode_all();
}

const char* to_string(ValueKind k) {
    switch (k) {
        case ValueKind::global_buffer_address: return "global_buffer_address";
        case ValueKind::by_value: return "by_value";
        case ValueKind::hidden: return "hidden";
    }
    return "?";
}

void KernelDescriptor::validate() const {
    if (mangled_name.empty())
        throw CodeObjectError("kernel descriptor has an empty name", 0);
    std::uint64_t watermark = 0;
    for (const ArgField& a : args) {
        if (a.size == 0)
            throw CodeObjectError("argument field of kernel " + mangled_name +
                                      " has zero size", 0);
        if (a.kind == ValueKind::global_buffer_address && a.size != 8)
            throw CodeObjectError("buffer-address argument of kernel " +
                                      mangled_name + " is not 8 bytes", 0);
        if (a.offset < watermark)
            throw CodeObjectError("argument fields of kernel " + mangled_name +
                                      " overlap or are unsorted", 0);
        watermark = std::uint64_t{a.offset} + a.size;
    }
    if (watermark > kernarg_segment_size)
        throw CodeObjectError("argument fields of kernel " + mangled_name +
                                  " extend past the kernarg segment", 0);
}

std::vector<std::byte> emit_code_object(const std::vector<KernelDescriptor>& kernels) {
    for (const KernelDescriptor& k : kernels) k.validate();
    std::vector<std::byte> payload = msg_encode(metadata_document(kernels));

    // Note body: header, vendor name (NUL included, padded to 4), payload.
    std::vector<std::byte> note(sizeof(Elf64NoteHeader));
    Elf64NoteHeader nh{sizeof(kNoteVendor), static_cast<std::uint32_t>(payload.size()),
                       kNoteTypeMetadata};
    std::memcpy(note.data(), &nh, sizeof nh);
    const auto* vendor = reinterpret_cast<const std::byte*>(kNoteVendor);
    note.insert(note.end(), vendor, vendor + sizeof(kNoteVendor));
    note.resize(align4(note.size()));
    note.insert(note.end(), payload.begin(), payload.end());
    note.resize(align4(note.size()));

    const char shstrtab[] = "\0.note\0.shstrtab";
    std::size_t note_off = sizeof(Elf64Header);
    std::size_t strtab_off = note_off + note.size();
    std::size_t sh_off = align4(strtab_off + sizeof(shstrtab));

    Elf64Header eh{};
    std::memcpy(eh.ident, kElfMagic, 4);
    eh.ident[4] = 2;  // 64-bit
    eh.ident[5] = 1;  // little endian
    eh.ident[6] = 1;  // current version
    eh.type = 1;      // relocatable
    eh.machine = 224;
    eh.version = 1;
    eh.shoff = sh_off;
    eh.ehsize = sizeof(Elf64Header);
    eh.shentsize = sizeof(Elf64SectionHeader);
    eh.shnum = 3;
    eh.shstrndx = 2;

    Elf64SectionHeader sh[3]{};
    sh[1].name = 1;  // ".note"
    sh[1].type = kSectionNote;
    sh[1].offset = note_off;
    sh[1].size = note.size();
    sh[1].addralign = 4;
    sh[2].name = 7;  // ".shstrtab"
    sh[2].type = 3;  // SHT_STRTAB
    sh[2].offset = strtab_off;
    sh[2].size = sizeof(shstrtab);
    sh[2].addralign = 1;

    std::vector<std::byte> image(sh_off + sizeof sh);
    std::memcpy(image.data(), &eh, sizeof eh);
    std::memcpy(image.data() + note_off, note.data(), note.size());
    std::memcpy(image.data() + strtab_off, shstrtab, sizeof(shstrtab));
    std::memcpy(image.data() + sh_off, sh, sizeof sh);
    return image;
}

DescriptorSet parse_code_object(const std::byte* data, std::size_t len,
                                std::vector<std::string>* warnings) {
    auto read_at = [&](void* dst, std::size_t off, std::size_t n, const char* what) {
        if (off > len || n > len - off)
            throw CodeObjectError(std::string("image truncated reading ") + what, off);
        std::memcpy(dst, data + off, n);
    };

    Elf64Header eh;
    read_at(&eh, 0, sizeof eh, "the file header");
    if (std::memcmp(eh.ident, kElfMagic, 4) != 0)
        throw CodeObjectError("not an object image (bad magic)", 0);
    if (eh.ident[4] != 2 || eh.ident[5] != 1)
        throw CodeObjectError("unsupported object class or byte order", 4);
    if (eh.shentsize != sizeof(Elf64SectionHeader) && eh.shnum != 0)
        throw CodeObjectError("unexpected section header entry size", 58);

    DescriptorSet out;
    bool found_note = false;
    for (std::uint16_t i = 0; i < eh.shnum; ++i) {
        std::size_t sh_pos = eh.shoff + std::size_t{i} * sizeof(Elf64SectionHeader);
        Elf64SectionHeader sh;
        read_at(&sh, sh_pos, sizeof sh, "a section header");
        if (sh.type != kSectionNote) continue;

        std::size_t pos = sh.offset;
        std::size_t section_end = sh.offset + sh.size;
        if (section_end < sh.offset || section_end > len)
            throw CodeObjectError("note section extends past the image", sh_pos);

        while (pos + sizeof(Elf64NoteHeader) <= section_end) {
            Elf64NoteHeader nh;
            read_at(&nh, pos, sizeof nh, "a note header");
            std::size_t name_pos = pos + sizeof nh;
            std::size_t desc_pos = name_pos + align4(nh.namesz);
            std::size_t next_pos = desc_pos + align4(nh.descsz);
            if (next_pos < pos || next_pos > section_end)
                throw CodeObjectError("note entry extends past its section", pos);

            bool vendor_match =
                nh.namesz == sizeof(kNoteVendor) &&
                std::memcmp(data + name_pos, kNoteVendor, sizeof(kNoteVendor)) == 0;
            if (vendor_match && nh.type == kNoteTypeMetadata) {
                found_note = true;
                MsgValue doc;
                try {
                    doc = msg_decode(data + desc_pos, nh.descsz);
                } catch (const CodeObjectError& e) {
                    throw CodeObjectError("bad metadata payload: " +
                                              std::string(e.what()),
                                          desc_pos + e.offset());
                }
                DescriptorSet part = descriptors_from_document(doc, warnings);
                for (auto& [name, desc] : part) {
                    if (!out.emplace(name, std::move(desc)).second)
                        throw CodeObjectError("kernel " + name +
                                                  " defined by two notes",
                                              desc_pos);
                }
            }
            pos = next_pos;
        }
    }
    if (!found_note)
        throw CodeObjectError("image carries no metadata note", 0);
    return out;
}

DescriptorSet parse_code_object(const std::vector<std::byte>& image,
                                std::vector<std::string>* warnings) {
    return parse_code_object(image.data(), image.size(), warnings);
}

DescriptorSet parse_code_object_file(const std::string& path,
                                     std::vector<std::string>* warnings) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open code object " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    return parse_code_object(reinterpret_cast<const std::byte*>(bytes.data()),
                             bytes.size(), warnings);
}

std::string read_raw_module_name(const void* module_struct, std::size_t name_offset) {
    const char* name = nullptr;
    std::memcpy(&name, static_cast<const std::byte*>(module_struct) + name_offset,
                sizeof name);
    if (!name) throw Error("raw module structure holds a null name pointer");
    return std::string(name);
}

void RegistrationTable::add_descriptors(const DescriptorSet& set) {
    std::lock_guard lock(mutex_);
    for (const auto& [name, desc] : set) {
        auto [it, inserted] = descriptors_.emplace(name, desc);
        if (!inserted && !(it->second == desc))
            throw Error("kernel " + name + " re-registered with a different descriptor");
    }
}

void RegistrationTable::register_handle(const void* handle, std::string_view name) {
    std::lock_guard lock(mutex_);
    auto desc = descriptors_.find(std::string(name));
    if (desc == descriptors_.end())
        throw Error("cannot register handle for unknown kernel " + std::string(name));
    auto [it, inserted] = handles_.emplace(handle, std::string(name));
    if (!inserted && it->second != name)
        throw Error("handle already bound to kernel " + it->second);
}

const KernelDescriptor& RegistrationTable::resolve(const void* handle) const {
    std::lock_guard lock(mutex_);
    auto it = handles_.find(handle);
    if (it == handles_.end()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%p", handle);
        throw Error("launch handle " + std::string(buf) + " is not registered");
    }
    return descriptors_.at(it->second);
}

const KernelDescriptor& RegistrationTable::find_by_name(std::string_view name) const {
    std::lock_guard lock(mutex_);
    auto it = descriptors_.find(std::string(name));
    if (it == descriptors_.end())
        throw Error("no descriptor for kernel " + std::string(name));
    return it->second;
}

bool RegistrationTable::has_kernel(std::string_view name) const {
    std::lock_guard lock(mutex_);
    return descriptors_.count(std::string(name)) != 0;
}

const KernelDescriptor& RegistrationTable::resolve_raw(const void* module_struct,
                                                       std::size_t name_offset) const {
    return find_by_name(read_raw_module_name(module_struct, name_offset));
}

std::size_t RegistrationTable::kernel_count() const {
    std::lock_guard lock(mutex_);
    return descriptors_.size();
}

std::size_t RegistrationTable::handle_count() const {
    std::lock_guard lock(mutex_);
    return handles_.size();
}

std::vector<std::string> RegistrationTable::kernel_names() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> names;
    names.reserve(descriptors_.size());
    for (const auto& [name, desc] : descriptors_) names.push_back(name);
    return names;
}

}  // namespace upage
