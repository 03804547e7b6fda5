#pragma once

#include <cstddef>
#include <cstdint>

namespace upage::kern {

/// A candidate pointer found while sliding an 8-byte window over a byte
/// buffer: the window offset and the value read there.
struct ScanHit {
    std::size_t offset;
    std::uint64_t value;
};

/// One implementation of the data-parallel inner loops. Variants must be
/// bit-identical: same IEEE operations in the same association order, no
/// fused multiply-add.
struct KernelTable {
    const char* name;

    // STREAM-style element-wise loops.
    void (*copy_f64)(const double* a, double* c, std::size_t n);
    void (*scale_f64)(const double* c, double* b, double s, std::size_t n);
    void (*add_f64)(const double* a, const double* b, double* c, std::size_t n);
    void (*triad_f64)(const double* b, const double* c, double* a, double s,
                      std::size_t n);

    // Sparse-solver building blocks.
    void (*axpy_f64)(double alpha, const double* x, double* y, std::size_t n);
    void (*xpay_f64)(double alpha, const double* x, double* y, std::size_t n);

    /// Five-point interior stencil on an nx*ny row-major grid:
    /// out = cc*in - cn*((west+east)+(north+south)). Boundary rows and
    /// columns are left untouched.
    void (*stencil5_f64)(const double* in, double* out, std::size_t nx,
                         std::size_t ny, double cc, double cn);

    /// Slides an 8-byte window over buf at 2-byte steps and records every
    /// window whose value lies in [lo, hi). Returns the hit count; stops
    /// recording (but keeps counting) once max_hits is reached.
    std::size_t (*scan_window_u64)(const std::byte* buf, std::size_t len,
                                   std::uint64_t lo, std::uint64_t hi,
                                   ScanHit* hits, std::size_t max_hits);
};

/// Order-sensitive reductions stay scalar in every variant.
double dot_f64(const double* a, const double* b, std::size_t n);
double sum_f64(const double* a, std::size_t n);

const KernelTable& scalar_kernels();

/// Vector variant, or nullptr when the build or the CPU lacks support.
const KernelTable* avx2_kernels();

/// Active table: UPAGE_KERNELS=scalar|avx2 forces a variant (an unsupported
/// forced variant throws), anything else picks the best supported one.
/// The choice is made once per process.
const KernelTable& kernels();

}  // namespace upage::kern
