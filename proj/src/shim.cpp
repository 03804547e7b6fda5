#include <cstdlib>
#include <exception>
#include <memory>
#include <mutex>
#include <string>

#include "upage/shim.h"

#include "upage/interposer.hpp"
#include "upage/trace.hpp"

namespace {

std::mutex g_mutex;
std::unique_ptr<upage::Interposer> g_interposer;
std::string g_trace_path;
thread_local std::string g_last_error;

int fail(const char* what) {
    g_last_error = what;
    return -1;
}

upage::Interposer& instance() {
    if (!g_interposer) throw upage::Error("engine not initialized");
    return *g_interposer;
}

}  // namespace

extern "C" {

int upage_init(const char* scheme) {
    std::lock_guard lock(g_mutex);
    try {
        if (g_interposer) throw upage::Error("engine already initialized");
        const char* mode = (scheme && *scheme) ? scheme
                                               : std::getenv("UPAGE_MODE");
        upage::InterposerConfig cfg;
        if (mode && *mode) cfg.scheme = upage::scheme_from_string(mode);
        if (const char* model_path = std::getenv("UPAGE_MODEL"))
            cfg.model = upage::DeviceModel::from_file(model_path);
        const char* trace_path = std::getenv("UPAGE_TRACE");
        g_trace_path = trace_path ? trace_path : "";
        g_interposer = std::make_unique<upage::Interposer>(cfg);
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

void* upage_alloc_managed(uint64_t len) {
    std::lock_guard lock(g_mutex);
    try {
        return instance().managed_alloc(len);
    } catch (const std::exception& e) {
        fail(e.what());
        return nullptr;
    }
}

int upage_free(void* ptr) {
    std::lock_guard lock(g_mutex);
    try {
        instance().managed_free(ptr);
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

int upage_register_code_object(const void* image, size_t len) {
    std::lock_guard lock(g_mutex);
    try {
        instance().register_code_object(static_cast<const std::byte*>(image),
                                        len);
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

int upage_register_function(const void* handle, const char* name) {
    std::lock_guard lock(g_mutex);
    try {
        if (!name) throw upage::Error("kernel name is null");
        instance().register_function(handle, name);
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

int upage_launch_kernel(const void* handle, const void* args, size_t args_len,
                        uint64_t items) {
    std::lock_guard lock(g_mutex);
    try {
        instance().launch(handle, static_cast<const std::byte*>(args), args_len,
                          items);
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

int upage_note_host_read(const void* ptr, uint64_t len) {
    std::lock_guard lock(g_mutex);
    try {
        instance().note_host_read(ptr, len);
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

int upage_note_host_write(const void* ptr, uint64_t len) {
    std::lock_guard lock(g_mutex);
    try {
        instance().note_host_write(ptr, len);
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

int upage_shutdown(void) {
    std::lock_guard lock(g_mutex);
    try {
        upage::Interposer& ip = instance();
        ip.shutdown();
        if (!g_trace_path.empty())
            upage::write_jsonl_file(g_trace_path, ip.sink().events());
        g_interposer.reset();
        return 0;
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

const char* upage_last_error(void) { return g_last_error.c_str(); }

}  // extern "C"
