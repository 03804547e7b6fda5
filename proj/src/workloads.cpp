#include <cmath>
#include <cstring>

#include "upage/bench.hpp"
#include "upage/code_object.hpp"
#include "upage/interposer.hpp"
#include "upage/kernels.hpp"

// The four synthetic workloads. Each driver is scheme-blind: it allocates
// through the interposer, announces host-side touches with the note hooks,
// and otherwise just dereferences its pointers. The math lives in helpers
// shared with the pure-host oracle so the coherence comparison is exact.

namespace upage::bench {
namespace {

constexpr std::uint64_t kDockProtein = 938;
constexpr std::uint64_t kDockLigand = 26;
constexpr std::uint64_t kDockFlopsPerPair = 16384;
constexpr std::uint64_t kHydroChunks = 64;

std::uint64_t arg_u64(const std::byte* blob, std::size_t off) {
    std::uint64_t v;
    std::memcpy(&v, blob + off, 8);
    return v;
}

double arg_f64(const std::byte* blob, std::size_t off) {
    double v;
    std::memcpy(&v, blob + off, 8);
    return v;
}

class BlobBuilder {
public:
    BlobBuilder& ptr(const void* p) {
        return u64(reinterpret_cast<std::uint64_t>(p));
    }
    BlobBuilder& u64(std::uint64_t v) {
        append(&v, 8);
        return *this;
    }
    BlobBuilder& f64(double v) {
        append(&v, 8);
        return *this;
    }
    const std::byte* data() const { return bytes_.data(); }
    std::size_t size() const { return bytes_.size(); }

private:
    void append(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::byte*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    std::vector<std::byte> bytes_;
};

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// ── shared init patterns and host-side scalar logic ─────────────────────────

void stream_fill(double* a, double* b, double* c, std::uint64_t n) {
    for (std::uint64_t i = 0; i < n; ++i) {
        a[i] = 1.0 + static_cast<double>(i % 13) * 0.25;
        b[i] = 2.0;
        c[i] = 0.0;
    }
}

void cg_fill(double* x, double* r, double* p, double* w, std::uint64_t n) {
    for (std::uint64_t i = 0; i < n; ++i) {
        double v = static_cast<double>((i * 29 + 7) % 97) / 97.0;
        x[i] = 0.0;
        r[i] = v;
        p[i] = v;
        w[i] = 0.0;
    }
}

double cg_alpha(double rr, double pw) { return pw != 0.0 ? rr / pw : 0.0; }
double cg_beta(double rr, double rr_prev) {
    return rr_prev != 0.0 ? rr / rr_prev : 0.0;
}

void hydro_fill(double* e, std::uint64_t n) {
    for (std::uint64_t i = 0; i < n; ++i)
        e[i] = 0.5 + 0.5 * static_cast<double>((i * 17 + 3) % 211) / 211.0;
}

double hydro_dt(double s1, double s2) {
    return 0.05 + 0.2 * std::fabs(std::sin(s1 / (std::fabs(s2) + 1.0)));
}

void hydro_reduce_chunks(const double* field, double* partials, std::uint64_t n) {
    std::uint64_t chunk = n / kHydroChunks;
    for (std::uint64_t j = 0; j < kHydroChunks; ++j)
        partials[j] = kern::sum_f64(field + j * chunk, chunk);
}

void dock_fill(double* protein, double* ligand, double* poses,
               double* energies, std::uint64_t nposes) {
    for (std::uint64_t i = 0; i < kDockProtein * 4; ++i)
        protein[i] = static_cast<double>((i * 37 + 11) % 101) * 0.0337 - 1.2;
    for (std::uint64_t i = 0; i < kDockLigand * 4; ++i)
        ligand[i] = static_cast<double>((i * 53 + 5) % 89) * 0.0289 - 0.9;
    for (std::uint64_t i = 0; i < nposes * 6; ++i)
        poses[i] = static_cast<double>((i * 41 + 13) % 157) * 0.04 - 3.0;
    for (std::uint64_t i = 0; i < nposes; ++i) energies[i] = 0.0;
}

void dock_score(const double* protein, const double* ligand, const double* poses,
                double* energies, std::uint64_t nposes) {
    for (std::uint64_t pz = 0; pz < nposes; ++pz) {
        const double* pose = poses + pz * 6;
        double cr = std::cos(pose[0]);
        double sr = std::sin(pose[0]);
        double e = 0.0;
        for (std::uint64_t j = 0; j < kDockLigand; ++j) {
            const double* la = ligand + j * 4;
            double lx = la[0] * cr - la[1] * sr + pose[3];
            double ly = la[0] * sr + la[1] * cr + pose[4];
            double lz = la[2] + pose[5];
            for (std::uint64_t i = 0; i < kDockProtein; ++i) {
                const double* pa = protein + i * 4;
                double dx = pa[0] - lx;
                double dy = pa[1] - ly;
                double dz = pa[2] - lz;
                double r2 = dx * dx + dy * dy + dz * dz + 0.01;
                double t = (pa[3] * la[3]) / (r2 * r2);
                e += t * (r2 - 0.05);
            }
        }
        energies[pz] = e;
    }
}

// ── descriptor fixtures ─────────────────────────────────────────────────────

KernelDescriptor desc(std::string name, std::uint32_t kernarg,
                      std::vector<ArgField> args) {
    KernelDescriptor d;
    d.mangled_name = std::move(name);
    d.kernarg_segment_size = kernarg;
    d.args = std::move(args);
    d.validate();
    return d;
}

constexpr auto kBuf = ValueKind::global_buffer_address;
constexpr auto kVal = ValueKind::by_value;

std::vector<KernelDescriptor> stream_descriptors() {
    return {
        desc("stream_copy", 16, {{0, 8, kBuf}, {8, 8, kBuf}}),
        desc("stream_scale", 24, {{0, 8, kBuf}, {8, 8, kBuf}, {16, 8, kVal}}),
        desc("stream_add", 24, {{0, 8, kBuf}, {8, 8, kBuf}, {16, 8, kBuf}}),
        desc("stream_triad", 32,
             {{0, 8, kBuf}, {8, 8, kBuf}, {16, 8, kBuf}, {24, 8, kVal}}),
    };
}

std::vector<KernelDescriptor> cg_descriptors() {
    return {
        desc("cg_stencil", 48,
             {{0, 8, kBuf}, {8, 8, kBuf}, {16, 16, kVal}, {32, 16, kVal}}),
        // The dot kernel takes one by-value capture holding three pointers;
        // dependencies are found by the window scan, not by direct args.
        desc("cg_dot", 24, {{0, 24, kVal}}),
        desc("cg_axpy", 24, {{0, 8, kBuf}, {8, 8, kBuf}, {16, 8, kVal}}),
        desc("cg_xpay", 24, {{0, 8, kBuf}, {8, 8, kBuf}, {16, 8, kVal}}),
    };
}

std::vector<KernelDescriptor> hydro_descriptors() {
    return {
        desc("hydro_advect", 40,
             {{0, 8, kBuf}, {8, 8, kBuf}, {16, 8, kBuf}, {24, 16, kVal}}),
        desc("hydro_reduce", 16, {{0, 16, kVal}}),
    };
}

std::vector<KernelDescriptor> dock_descriptors() {
    return {
        desc("dock_energies", 48,
             {{0, 8, kBuf}, {8, 8, kBuf}, {16, 8, kBuf}, {24, 8, kBuf},
              {32, 16, kVal}}),
    };
}

// ── simulated kernel bodies ─────────────────────────────────────────────────

SimKernel k_stream_copy() {
    return {"stream_copy",
            [](const KernelCtx& ctx, const std::byte* blob, std::uint64_t n) {
                auto* c = ctx.as<double>(arg_u64(blob, 0));
                auto* a = ctx.as<const double>(arg_u64(blob, 8));
                kern::kernels().copy_f64(a, c, n);
            },
            {}};
}

SimKernel k_stream_scale() {
    return {"stream_scale",
            [](const KernelCtx& ctx, const std::byte* blob, std::uint64_t n) {
                auto* b = ctx.as<double>(arg_u64(blob, 0));
                auto* c = ctx.as<const double>(arg_u64(blob, 8));
                kern::kernels().scale_f64(c, b, arg_f64(blob, 16), n);
            },
            {}};
}

SimKernel k_stream_add() {
    return {"stream_add",
            [](const KernelCtx& ctx, const std::byte* blob, std::uint64_t n) {
                auto* c = ctx.as<double>(arg_u64(blob, 0));
                auto* a = ctx.as<const double>(arg_u64(blob, 8));
                auto* b = ctx.as<const double>(arg_u64(blob, 16));
                kern::kernels().add_f64(a, b, c, n);
            },
            {}};
}

SimKernel k_stream_triad() {
    return {"stream_triad",
            [](const KernelCtx& ctx, const std::byte* blob, std::uint64_t n) {
                auto* a = ctx.as<double>(arg_u64(blob, 0));
                auto* b = ctx.as<const double>(arg_u64(blob, 8));
                auto* c = ctx.as<const double>(arg_u64(blob, 16));
                kern::kernels().triad_f64(b, c, a, arg_f64(blob, 24), n);
            },
            {}};
}

SimKernel k_cg_stencil() {
    return {"cg_stencil",
            [](const KernelCtx& ctx, const std::byte* blob, std::uint64_t) {
                auto* p = ctx.as<const double>(arg_u64(blob, 0));
                auto* w = ctx.as<double>(arg_u64(blob, 8));
                kern::kernels().stencil5_f64(p, w, arg_u64(blob, 16),
                                             arg_u64(blob, 24), arg_f64(blob, 32),
                                             arg_f64(blob, 40));
            },
            {}};
}

SimKernel k_cg_dot() {
    return {"cg_dot",
            [](const KernelCtx& ctx, const std::byte* blob, std::uint64_t n) {
                auto* x = ctx.as<const double>(arg_u64(blob, 0));
                auto* y = ctx.as<const double>(arg_u64(blob, 8));
                auto* out = ctx.as<double>(arg_u64(blob, 16));
                out[0] = kern::dot_f64(x, y, n);
            },
            {}};
}

SimKernel k_cg_axpy() {
    return {"cg_axpy",
            [](const KernelCtx& ctx, const std::byte* blob, std::uint64_t n) {
                auto* y = ctx.as<double>(arg_u64(blob, 0));
                auto* x = ctx.as<const double>(arg_u64(blob, 8));
                kern::kernels().axpy_f64(arg_f64(blob, 16), x, y, n);
            },
            {}};
}

SimKernel k_cg_xpay() {
    return {"cg_xpay",
            [](const KernelCtx& ctx, const std::byte* blob, std::uint64_t n) {
                auto* y = ctx.as<double>(arg_u64(blob, 0));
                auto* x = ctx.as<const double>(arg_u64(blob, 8));
                kern::kernels().xpay_f64(arg_f64(blob, 16), x, y, n);
            },
            {}};
}

SimKernel k_hydro_advect() {
    return {"hydro_advect",
            [](const KernelCtx& ctx, const std::byte* blob, std::uint64_t) {
                auto* in = ctx.as<const double>(arg_u64(blob, 0));
                auto* out = ctx.as<double>(arg_u64(blob, 8));
                auto* dt = ctx.as<const double>(arg_u64(blob, 16));
                std::uint64_t nx = arg_u64(blob, 24);
                std::uint64_t ny = arg_u64(blob, 32);
                double c = dt[0];
                kern::kernels().stencil5_f64(in, out, nx, ny, 1.0 - 4.0 * c, -c);
            },
            {}};
}

SimKernel k_hydro_reduce() {
    return {"hydro_reduce",
            [](const KernelCtx& ctx, const std::byte* blob, std::uint64_t n) {
                auto* field = ctx.as<const double>(arg_u64(blob, 0));
                auto* partials = ctx.as<double>(arg_u64(blob, 8));
                hydro_reduce_chunks(field, partials, n);
            },
            {}};
}

SimKernel k_dock() {
    return {"dock_energies",
            [](const KernelCtx& ctx, const std::byte* blob, std::uint64_t nposes) {
                auto* protein = ctx.as<const double>(arg_u64(blob, 0));
                auto* ligand = ctx.as<const double>(arg_u64(blob, 8));
                auto* poses = ctx.as<const double>(arg_u64(blob, 16));
                auto* energies = ctx.as<double>(arg_u64(blob, 24));
                dock_score(protein, ligand, poses, energies, nposes);
            },
            [](std::uint64_t nposes) {
                return nposes * kDockProtein * kDockLigand * kDockFlopsPerPair;
            }};
}

// ── driver plumbing ─────────────────────────────────────────────────────────

struct Driver {
    Interposer& ip;

    template <typename T>
    T* alloc(std::uint64_t count) {
        return static_cast<T*>(ip.managed_alloc(count * sizeof(T)));
    }

    void setup(const std::vector<KernelDescriptor>& descs,
               const std::vector<std::pair<const void*, const char*>>& handles,
               std::vector<SimKernel> kernels) {
        std::vector<std::byte> image = emit_code_object(descs);
        ip.register_code_object(image.data(), image.size());
        for (const auto& [handle, name] : handles)
            ip.register_function(handle, name);
        for (SimKernel& k : kernels) ip.add_kernel(std::move(k));
    }

    void launch(const void* handle, const BlobBuilder& blob, std::uint64_t items) {
        ip.launch(handle, blob.data(), blob.size(), items);
    }

    /// Host-visible digest of the listed buffers, read through the
    /// application view so the access plays by the scheme's rules.
    std::string checksum(
        const std::vector<std::pair<const void*, std::uint64_t>>& bufs) {
        std::uint64_t h = 14695981039346656037ull;
        for (const auto& [p, len] : bufs) {
            ip.note_host_read(p, len);
            h = fnv1a(p, len, h);
        }
        return hex64(h);
    }
};

std::string oracle_digest(
    const std::vector<std::pair<const void*, std::uint64_t>>& bufs) {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& [p, len] : bufs) h = fnv1a(p, len, h);
    return hex64(h);
}

// ── stream ──────────────────────────────────────────────────────────────────

constexpr double kStreamScalar = 0.42;

std::string run_stream(Driver& d, const WorkloadSpec& spec) {
    static const int hc = 0, hs = 0, ha = 0, ht = 0;
    d.setup(stream_descriptors(),
            {{&hc, "stream_copy"},
             {&hs, "stream_scale"},
             {&ha, "stream_add"},
             {&ht, "stream_triad"}},
            {k_stream_copy(), k_stream_scale(), k_stream_add(), k_stream_triad()});

    const std::uint64_t n = spec.elems;
    double* a = d.alloc<double>(n);
    double* b = d.alloc<double>(n);
    double* c = d.alloc<double>(n);
    d.ip.note_host_write(a, n * 8);
    d.ip.note_host_write(b, n * 8);
    d.ip.note_host_write(c, n * 8);
    stream_fill(a, b, c, n);

    for (std::uint64_t it = 0; it < spec.iterations; ++it) {
        d.launch(&hc, BlobBuilder().ptr(c).ptr(a), n);
        d.launch(&hs, BlobBuilder().ptr(b).ptr(c).f64(kStreamScalar), n);
        d.launch(&ha, BlobBuilder().ptr(c).ptr(a).ptr(b), n);
        d.launch(&ht, BlobBuilder().ptr(a).ptr(b).ptr(c).f64(kStreamScalar), n);
    }

    std::string digest = d.checksum({{a, n * 8}, {b, n * 8}, {c, n * 8}});
    d.ip.managed_free(a);
    d.ip.managed_free(b);
    d.ip.managed_free(c);
    return digest;
}

std::string oracle_stream(const WorkloadSpec& spec) {
    const std::uint64_t n = spec.elems;
    std::vector<double> a(n), b(n), c(n);
    stream_fill(a.data(), b.data(), c.data(), n);
    const auto& K = kern::kernels();
    for (std::uint64_t it = 0; it < spec.iterations; ++it) {
        K.copy_f64(a.data(), c.data(), n);
        K.scale_f64(c.data(), b.data(), kStreamScalar, n);
        K.add_f64(a.data(), b.data(), c.data(), n);
        K.triad_f64(b.data(), c.data(), a.data(), kStreamScalar, n);
    }
    return oracle_digest(
        {{a.data(), n * 8}, {b.data(), n * 8}, {c.data(), n * 8}});
}

// ── cg ──────────────────────────────────────────────────────────────────────

constexpr double kCgCentre = 5.0;
constexpr double kCgNeighbour = 1.0;

std::string run_cg(Driver& d, const WorkloadSpec& spec) {
    static const int hst = 0, hdot = 0, hax = 0, hxp = 0;
    d.setup(cg_descriptors(),
            {{&hst, "cg_stencil"},
             {&hdot, "cg_dot"},
             {&hax, "cg_axpy"},
             {&hxp, "cg_xpay"}},
            {k_cg_stencil(), k_cg_dot(), k_cg_axpy(), k_cg_xpay()});

    const std::uint64_t g = spec.grid, n = g * g;
    double* x = d.alloc<double>(n);
    double* r = d.alloc<double>(n);
    double* p = d.alloc<double>(n);
    double* w = d.alloc<double>(n);
    double* res_pw = d.alloc<double>(1);
    double* res_rr = d.alloc<double>(1);
    for (double* buf : {x, r, p, w}) d.ip.note_host_write(buf, n * 8);
    d.ip.note_host_write(res_pw, 8);
    d.ip.note_host_write(res_rr, 8);
    cg_fill(x, r, p, w, n);
    *res_pw = 0.0;
    *res_rr = 0.0;

    double rr_prev = 1.0;
    for (std::uint64_t step = 0; step < spec.iterations; ++step) {
        d.launch(&hst, BlobBuilder()
                           .ptr(p).ptr(w).u64(g).u64(g)
                           .f64(kCgCentre).f64(kCgNeighbour),
                 n);
        d.launch(&hdot, BlobBuilder().ptr(p).ptr(w).ptr(res_pw), n);
        d.ip.note_host_read(res_pw, 8);
        double pw = *res_pw;
        d.launch(&hdot, BlobBuilder().ptr(r).ptr(r).ptr(res_rr), n);
        d.ip.note_host_read(res_rr, 8);
        double rr = *res_rr;

        double alpha = cg_alpha(rr, pw);
        d.launch(&hax, BlobBuilder().ptr(x).ptr(p).f64(alpha), n);
        d.launch(&hax, BlobBuilder().ptr(r).ptr(w).f64(-alpha), n);
        double beta = cg_beta(rr, rr_prev);
        rr_prev = rr;
        d.launch(&hxp, BlobBuilder().ptr(p).ptr(r).f64(beta), n);
    }

    std::string digest = d.checksum({{x, n * 8},
                                     {r, n * 8},
                                     {p, n * 8},
                                     {w, n * 8},
                                     {res_pw, 8},
                                     {res_rr, 8}});
    for (double* buf : {x, r, p, w, res_pw, res_rr}) d.ip.managed_free(buf);
    return digest;
}

std::string oracle_cg(const WorkloadSpec& spec) {
    const std::uint64_t g = spec.grid, n = g * g;
    std::vector<double> x(n), r(n), p(n), w(n);
    double res_pw = 0.0, res_rr = 0.0;
    cg_fill(x.data(), r.data(), p.data(), w.data(), n);
    const auto& K = kern::kernels();
    double rr_prev = 1.0;
    for (std::uint64_t step = 0; step < spec.iterations; ++step) {
        K.stencil5_f64(p.data(), w.data(), g, g, kCgCentre, kCgNeighbour);
        res_pw = kern::dot_f64(p.data(), w.data(), n);
        double pw = res_pw;
        res_rr = kern::dot_f64(r.data(), r.data(), n);
        double rr = res_rr;
        double alpha = cg_alpha(rr, pw);
        K.axpy_f64(alpha, p.data(), x.data(), n);
        K.axpy_f64(-alpha, w.data(), r.data(), n);
        double beta = cg_beta(rr, rr_prev);
        rr_prev = rr;
        K.xpay_f64(beta, r.data(), p.data(), n);
    }
    return oracle_digest({{x.data(), n * 8},
                          {r.data(), n * 8},
                          {p.data(), n * 8},
                          {w.data(), n * 8},
                          {&res_pw, 8},
                          {&res_rr, 8}});
}

// ── hydro ───────────────────────────────────────────────────────────────────

std::string run_hydro(Driver& d, const WorkloadSpec& spec) {
    static const int hadv = 0, hred = 0;
    d.setup(hydro_descriptors(), {{&hadv, "hydro_advect"}, {&hred, "hydro_reduce"}},
            {k_hydro_advect(), k_hydro_reduce()});

    const std::uint64_t g = spec.grid, n = g * g;
    double* e0 = d.alloc<double>(n);
    double* e1 = d.alloc<double>(n);
    double* partials1 = d.alloc<double>(kHydroChunks);
    double* partials2 = d.alloc<double>(kHydroChunks);
    double* dt = d.alloc<double>(1);
    d.ip.note_host_write(e0, n * 8);
    d.ip.note_host_write(e1, n * 8);
    d.ip.note_host_write(partials1, kHydroChunks * 8);
    d.ip.note_host_write(partials2, kHydroChunks * 8);
    d.ip.note_host_write(dt, 8);
    hydro_fill(e0, n);
    std::memcpy(e1, e0, n * 8);
    for (std::uint64_t j = 0; j < kHydroChunks; ++j)
        partials1[j] = partials2[j] = 0.0;
    *dt = 0.1;

    double* cur = e0;
    double* nxt = e1;
    for (std::uint64_t step = 1; step <= spec.iterations; ++step) {
        d.launch(&hadv, BlobBuilder().ptr(cur).ptr(nxt).ptr(dt).u64(g).u64(g), n);
        std::swap(cur, nxt);
        if (step % spec.cadence == 0) {
            d.launch(&hred, BlobBuilder().ptr(cur).ptr(partials1), n);
            d.launch(&hred, BlobBuilder().ptr(nxt).ptr(partials2), n);
            d.ip.note_host_read(partials1, kHydroChunks * 8);
            double s1 = kern::sum_f64(partials1, kHydroChunks);
            d.ip.note_host_read(partials2, kHydroChunks * 8);
            double s2 = kern::sum_f64(partials2, kHydroChunks);
            d.ip.note_host_write(dt, 8);
            *dt = hydro_dt(s1, s2);
        }
    }

    std::string digest = d.checksum({{e0, n * 8},
                                     {e1, n * 8},
                                     {partials1, kHydroChunks * 8},
                                     {partials2, kHydroChunks * 8},
                                     {dt, 8}});
    for (double* buf : {e0, e1, partials1, partials2, dt})
        d.ip.managed_free(buf);
    return digest;
}

std::string oracle_hydro(const WorkloadSpec& spec) {
    const std::uint64_t g = spec.grid, n = g * g;
    std::vector<double> e0(n), e1(n), partials1(kHydroChunks, 0.0),
        partials2(kHydroChunks, 0.0);
    double dt = 0.1;
    hydro_fill(e0.data(), n);
    e1 = e0;
    const auto& K = kern::kernels();

    double* cur = e0.data();
    double* nxt = e1.data();
    for (std::uint64_t step = 1; step <= spec.iterations; ++step) {
        double c = dt;
        K.stencil5_f64(cur, nxt, g, g, 1.0 - 4.0 * c, -c);
        std::swap(cur, nxt);
        if (step % spec.cadence == 0) {
            hydro_reduce_chunks(cur, partials1.data(), n);
            hydro_reduce_chunks(nxt, partials2.data(), n);
            double s1 = kern::sum_f64(partials1.data(), kHydroChunks);
            double s2 = kern::sum_f64(partials2.data(), kHydroChunks);
            dt = hydro_dt(s1, s2);
        }
    }
    return oracle_digest({{e0.data(), n * 8},
                          {e1.data(), n * 8},
                          {partials1.data(), kHydroChunks * 8},
                          {partials2.data(), kHydroChunks * 8},
                          {&dt, 8}});
}

// ── dock ────────────────────────────────────────────────────────────────────

std::string run_dock(Driver& d, const WorkloadSpec& spec) {
    static const int hdk = 0;
    d.setup(dock_descriptors(), {{&hdk, "dock_energies"}}, {k_dock()});

    const std::uint64_t np = spec.poses;
    double* protein = d.alloc<double>(kDockProtein * 4);
    double* ligand = d.alloc<double>(kDockLigand * 4);
    double* poses = d.alloc<double>(np * 6);
    double* energies = d.alloc<double>(np);
    d.ip.note_host_write(protein, kDockProtein * 4 * 8);
    d.ip.note_host_write(ligand, kDockLigand * 4 * 8);
    d.ip.note_host_write(poses, np * 6 * 8);
    d.ip.note_host_write(energies, np * 8);
    dock_fill(protein, ligand, poses, energies, np);

    for (std::uint64_t it = 0; it < spec.iterations; ++it) {
        d.launch(&hdk, BlobBuilder()
                           .ptr(protein).ptr(ligand).ptr(poses).ptr(energies)
                           .u64(kDockProtein).u64(kDockLigand),
                 np);
    }

    std::string digest = d.checksum({{protein, kDockProtein * 4 * 8},
                                     {ligand, kDockLigand * 4 * 8},
                                     {poses, np * 6 * 8},
                                     {energies, np * 8}});
    for (double* buf : {protein, ligand, poses, energies}) d.ip.managed_free(buf);
    return digest;
}

std::string oracle_dock(const WorkloadSpec& spec) {
    const std::uint64_t np = spec.poses;
    std::vector<double> protein(kDockProtein * 4), ligand(kDockLigand * 4),
        poses(np * 6), energies(np);
    dock_fill(protein.data(), ligand.data(), poses.data(), energies.data(), np);
    for (std::uint64_t it = 0; it < spec.iterations; ++it)
        dock_score(protein.data(), ligand.data(), poses.data(), energies.data(),
                   np);
    return oracle_digest({{protein.data(), kDockProtein * 4 * 8},
                          {ligand.data(), kDockLigand * 4 * 8},
                          {poses.data(), np * 6 * 8},
                          {energies.data(), np * 8}});
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

const char* to_string(WorkloadKind k) {
    switch (k) {
        case WorkloadKind::stream: return "stream";
        case WorkloadKind::cg: return "cg";
        case WorkloadKind::hydro: return "hydro";
        case WorkloadKind::dock: return "dock";
    }
    return "?";
}

WorkloadKind workload_from_string(std::string_view s) {
    if (s == "stream") return WorkloadKind::stream;
    if (s == "cg") return WorkloadKind::cg;
    if (s == "hydro") return WorkloadKind::hydro;
    if (s == "dock") return WorkloadKind::dock;
    throw ConfigError("unknown workload: " + std::string(s));
}

void WorkloadSpec::validate() const {
    if (elems == 0 || grid < 3 || poses == 0 || iterations == 0)
        throw ConfigError("workload sizes must be positive (grid at least 3)");
    if (kind == WorkloadKind::hydro) {
        if (cadence == 0 || iterations % cadence != 0)
            throw ConfigError("hydro cadence must divide the step count");
        if ((grid * grid) % kHydroChunks != 0)
            throw ConfigError("hydro grid cells must divide into " +
                              std::to_string(kHydroChunks) + " chunks");
    }
}

WorkloadSpec WorkloadSpec::defaults(WorkloadKind kind) {
    WorkloadSpec spec;
    spec.kind = kind;
    switch (kind) {
        case WorkloadKind::stream:
            spec.elems = 1ull << 20;
            spec.iterations = 100;
            break;
        case WorkloadKind::cg:
            spec.grid = 192;
            spec.iterations = 30;
            break;
        case WorkloadKind::hydro:
            spec.grid = 128;
            spec.iterations = 300;
            spec.cadence = 20;
            break;
        case WorkloadKind::dock:
            spec.poses = 256;
            spec.iterations = 8;
            break;
    }
    return spec;
}

RunResult run_workload(const WorkloadSpec& spec, SchemeKind scheme,
                       const DeviceModel& model) {
    spec.validate();
    InterposerConfig cfg;
    cfg.scheme = scheme;
    cfg.model = model;
    Interposer ip(cfg);
    Driver d{ip};

    RunResult result;
    result.scheme = scheme;
    result.spec = spec;
    result.model_name = model.name;
    switch (spec.kind) {
        case WorkloadKind::stream: result.checksum = run_stream(d, spec); break;
        case WorkloadKind::cg: result.checksum = run_cg(d, spec); break;
        case WorkloadKind::hydro: result.checksum = run_hydro(d, spec); break;
        case WorkloadKind::dock: result.checksum = run_dock(d, spec); break;
    }
    ip.shutdown();
    result.events = ip.sink().events();
    return result;
}

std::string host_oracle_checksum(const WorkloadSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case WorkloadKind::stream: return oracle_stream(spec);
        case WorkloadKind::cg: return oracle_cg(spec);
        case WorkloadKind::hydro: return oracle_hydro(spec);
        case WorkloadKind::dock: return oracle_dock(spec);
    }
    throw ConfigError("unreachable workload kind");
}

}  // namespace upage::bench
