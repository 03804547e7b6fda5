#include "upage/kernels.hpp"

#include <cstring>

namespace upage::kern {
namespace {

void copy_f64(const double* a, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i];
}

void scale_f64(const double* c, double* b, double s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) b[i] = s * c[i];
}

void add_f64(const double* a, const double* b, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void triad_f64(const double* b, const double* c, double* a, double s,
               std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) a[i] = b[i] + s * c[i];
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i] + y[i];
}

void xpay_f64(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + alpha * y[i];
}

void stencil5_f64(const double* in, double* out, std::size_t nx, std::size_t ny,
                  double cc, double cn) {
    for (std::size_t j = 1; j + 1 < ny; ++j) {
        const double* row = in + j * nx;
        double* orow = out + j * nx;
        for (std::size_t i = 1; i + 1 < nx; ++i) {
            orow[i] = cc * row[i] -
                      cn * ((row[i - 1] + row[i + 1]) +
                            (row[i - nx] + row[i + nx]));
        }
    }
}

std::size_t scan_window_u64(const std::byte* buf, std::size_t len,
                            std::uint64_t lo, std::uint64_t hi, ScanHit* hits,
                            std::size_t max_hits) {
    std::size_t count = 0;
    if (len < 8) return 0;
    for (std::size_t off = 0; off + 8 <= len; off += 2) {
        std::uint64_t v;
        std::memcpy(&v, buf + off, 8);
        if (v >= lo && v < hi) {
            if (count < max_hits) hits[count] = {off, v};
            ++count;
        }
    }
    return count;
}

}  // namespace

double dot_f64(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_f64(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

const KernelTable& scalar_kernels() {
    static const KernelTable table{
        "scalar",  copy_f64,    scale_f64, add_f64,
        triad_f64, axpy_f64,    xpay_f64,  stencil5_f64,
        scan_window_u64,
    };
    return table;
}

}  // namespace upage::kern
