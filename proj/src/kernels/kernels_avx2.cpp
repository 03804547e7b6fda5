// AVX2 variants of the inner loops. This translation unit is compiled with
// -mavx2 and fused multiply-add disabled so results stay bit-identical to
// the scalar table. Without AVX2 support in the build it degrades to a stub.

#include "upage/kernels.hpp"

#ifdef __AVX2__

#include <immintrin.h>

#include <algorithm>
#include <cstring>

namespace upage::kern {
namespace {

void copy_f64(const double* a, double* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_loadu_pd(a + i));
    for (; i < n; ++i) c[i] = a[i];
}

void scale_f64(const double* c, double* b, double s, std::size_t n) {
    __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(b + i, _mm256_mul_pd(vs, _mm256_loadu_pd(c + i)));
    for (; i < n; ++i) b[i] = s * c[i];
}

void add_f64(const double* a, const double* b, double* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(
            c + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) c[i] = a[i] + b[i];
}

void triad_f64(const double* b, const double* c, double* a, double s,
               std::size_t n) {
    __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(
            a + i, _mm256_add_pd(_mm256_loadu_pd(b + i),
                                 _mm256_mul_pd(vs, _mm256_loadu_pd(c + i))));
    for (; i < n; ++i) a[i] = b[i] + s * c[i];
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
    __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(
            y + i, _mm256_add_pd(_mm256_mul_pd(va, _mm256_loadu_pd(x + i)),
                                 _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] = alpha * x[i] + y[i];
}

void xpay_f64(double alpha, const double* x, double* y, std::size_t n) {
    __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(
            y + i, _mm256_add_pd(_mm256_loadu_pd(x + i),
                                 _mm256_mul_pd(va, _mm256_loadu_pd(y + i))));
    for (; i < n; ++i) y[i] = x[i] + alpha * y[i];
}

void stencil5_f64(const double* in, double* out, std::size_t nx, std::size_t ny,
                  double cc, double cn) {
    __m256d vcc = _mm256_set1_pd(cc);
    __m256d vcn = _mm256_set1_pd(cn);
    for (std::size_t j = 1; j + 1 < ny; ++j) {
        const double* row = in + j * nx;
        double* orow = out + j * nx;
        std::size_t i = 1;
        for (; i + 4 <= nx - 1; i += 4) {
            __m256d west = _mm256_loadu_pd(row + i - 1);
            __m256d east = _mm256_loadu_pd(row + i + 1);
            __m256d north = _mm256_loadu_pd(row + i - nx);
            __m256d south = _mm256_loadu_pd(row + i + nx);
            __m256d centre = _mm256_loadu_pd(row + i);
            __m256d halo = _mm256_add_pd(_mm256_add_pd(west, east),
                                         _mm256_add_pd(north, south));
            _mm256_storeu_pd(orow + i, _mm256_sub_pd(_mm256_mul_pd(vcc, centre),
                                                     _mm256_mul_pd(vcn, halo)));
        }
        for (; i + 1 < nx; ++i) {
            orow[i] = cc * row[i] -
                      cn * ((row[i - 1] + row[i + 1]) +
                            (row[i - nx] + row[i + nx]));
        }
    }
}

std::size_t scan_window_u64(const std::byte* buf, std::size_t len,
                            std::uint64_t lo, std::uint64_t hi, ScanHit* hits,
                            std::size_t max_hits) {
    if (len < 8) return 0;
    // The class-by-class sweep below visits windows out of offset order, so
    // a full hits buffer must keep the max_hits smallest offsets to match
    // the scalar table's ascending-scan truncation.
    std::size_t count = 0, stored = 0;
    auto record = [&](std::size_t off, std::uint64_t v) {
        ++count;
        if (max_hits == 0) return;
        if (stored == max_hits) {
            if (off > hits[stored - 1].offset) return;
            --stored;  // evict the largest recorded offset
        }
        std::size_t pos = stored;
        for (; pos > 0 && hits[pos - 1].offset > off; --pos) hits[pos] = hits[pos - 1];
        hits[pos] = {off, v};
        ++stored;
    };

    // There is no unsigned 64-bit compare; flip the sign bit and use the
    // signed one.
    const __m256i bias = _mm256_set1_epi64x(
        static_cast<long long>(0x8000000000000000ull));
    const __m256i vlo =
        _mm256_xor_si256(_mm256_set1_epi64x(static_cast<long long>(lo)), bias);
    const __m256i vhi =
        _mm256_xor_si256(_mm256_set1_epi64x(static_cast<long long>(hi)), bias);

    // Window offsets advance in 2-byte steps; split them into four classes
    // by offset mod 8 so each class is a stream of 8-byte-strided windows,
    // four of which fit one 32-byte load.
    for (std::size_t shift = 0; shift < 8; shift += 2) {
        if (shift + 8 > len) break;
        std::size_t off = shift;
        for (; off + 32 <= len; off += 32) {
            __m256i w = _mm256_loadu_si256(
                reinterpret_cast<const __m256i*>(buf + off));
            __m256i wb = _mm256_xor_si256(w, bias);
            __m256i ge_lo = _mm256_andnot_si256(
                _mm256_cmpgt_epi64(vlo, wb), _mm256_set1_epi64x(-1));
            __m256i lt_hi = _mm256_cmpgt_epi64(vhi, wb);
            int mask = _mm256_movemask_pd(
                _mm256_castsi256_pd(_mm256_and_si256(ge_lo, lt_hi)));
            if (mask) {
                alignas(32) std::uint64_t lanes[4];
                _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), w);
                for (int lane = 0; lane < 4; ++lane)
                    if (mask & (1 << lane)) record(off + 8 * lane, lanes[lane]);
            }
        }
        for (; off + 8 <= len; off += 8) {
            std::uint64_t v;
            std::memcpy(&v, buf + off, 8);
            if (v >= lo && v < hi) record(off, v);
        }
    }

    return count;
}

}  // namespace

const KernelTable* avx2_kernels() {
    if (!__builtin_cpu_supports("avx2")) return nullptr;
    static const KernelTable table{
        "avx2",    copy_f64,    scale_f64, add_f64,
        triad_f64, axpy_f64,    xpay_f64,  stencil5_f64,
        scan_window_u64,
    };
    return &table;
}

}  // namespace upage::kern

#else  // !__AVX2__

namespace upage::kern {

const KernelTable* avx2_kernels() { return nullptr; }

}  // namespace upage::kern

#endif
