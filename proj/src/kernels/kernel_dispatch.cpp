#include "upage/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "upage/common.hpp"

namespace upage::kern {
namespace {

const KernelTable& select() {
    const char* force = std::getenv("UPAGE_KERNELS");
    if (force && *force) {
        if (std::strcmp(force, "scalar") == 0) return scalar_kernels();
        if (std::strcmp(force, "avx2") == 0) {
            const KernelTable* t = avx2_kernels();
            if (!t) throw ConfigError("UPAGE_KERNELS=avx2 but AVX2 is unavailable");
            return *t;
        }
        if (std::strcmp(force, "auto") != 0)
            throw ConfigError(std::string("unknown UPAGE_KERNELS value: ") + force);
    }
    const KernelTable* t = avx2_kernels();
    return t ? *t : scalar_kernels();
}

}  // namespace

const KernelTable& kernels() {
    static const KernelTable& chosen = select();
    return chosen;
}

}  // namespace upage::kern
