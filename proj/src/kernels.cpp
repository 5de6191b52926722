#include "dhvae/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <vector>

#include "dhvae/errors.hpp"

namespace dhvae::kernels {

namespace scalar {

static void add(const double* a, const double* b, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}
static void sub(const double* a, const double* b, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}
static void mul(const double* a, const double* b, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}
static void div(const double* a, const double* b, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] / b[i];
}
static void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
static void scale(double alpha, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}
static double sum(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}
static double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

// Reference GEMM. Loop orders chosen so the inner loop walks contiguous
// memory for the common (ta, tb) layouts.
static void matmul(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n,
                   bool ta, bool tb) {
    std::memset(c, 0, m * n * sizeof(double));
    if (!ta && !tb) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const double av = a[i * k + p];
                const double* brow = b + p * n;
                double* crow = c + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
    } else if (!ta && tb) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                c[i * n + j] = dot(a + i * k, b + j * k, k);
    } else if (ta && !tb) {
        // a is (k x m)
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < m; ++i) {
                const double av = a[p * m + i];
                const double* brow = b + p * n;
                double* crow = c + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
    } else {
        // a is (k x m), b is (n x k)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[j * k + p];
                c[i * n + j] = s;
            }
    }
}

}  // namespace scalar

static const KernelTable kScalarTable = {
    scalar::add, scalar::sub, scalar::mul, scalar::div,
    scalar::axpy, scalar::scale, scalar::sum, scalar::dot, scalar::matmul,
};

#if defined(__x86_64__) || defined(_M_X64)
#define DHVAE_X86 1
#else
#define DHVAE_X86 0
#endif

#if DHVAE_X86
// Defined in kernels_avx2.cpp (compiled with -mavx2 -mfma).
extern const KernelTable kAvx2Table;
#endif

bool cpu_has_avx2() {
#if DHVAE_X86
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

static Isa detect_default_isa() {
    if (const char* env = std::getenv("DHVAE_KERNEL_ISA")) {
        std::string v(env);
        if (v == "scalar") return Isa::scalar;
        if (v == "avx2") {
            if (!cpu_has_avx2())
                throw ConfigError("DHVAE_KERNEL_ISA=avx2 but CPU lacks AVX2/FMA");
            return Isa::avx2;
        }
        throw ConfigError("unknown DHVAE_KERNEL_ISA value: " + v);
    }
    return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

static Isa g_isa = detect_default_isa();

Isa active_isa() { return g_isa; }

void set_isa(Isa isa) {
    if (isa == Isa::avx2 && !cpu_has_avx2())
        throw ConfigError("cannot select AVX2 kernels: CPU lacks AVX2/FMA");
    g_isa = isa;
}

std::string isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

const KernelTable& table_for(Isa isa) {
#if DHVAE_X86
    if (isa == Isa::avx2) return kAvx2Table;
#else
    if (isa == Isa::avx2) throw ConfigError("AVX2 kernels unavailable on this platform");
#endif
    return kScalarTable;
}

const KernelTable& active() { return table_for(g_isa); }

}  // namespace dhvae::kernels
