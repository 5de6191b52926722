// AVX2 + FMA lane. This translation unit is the only one compiled with
// -mavx2 -mfma; callers reach it through the dispatch table, never directly.

#include "dhvae/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstring>

namespace dhvae::kernels {
namespace avx2 {

static void add(const double* a, const double* b, double* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) c[i] = a[i] + b[i];
}
static void sub(const double* a, const double* b, double* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) c[i] = a[i] - b[i];
}
static void mul(const double* a, const double* b, double* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) c[i] = a[i] * b[i];
}
static void div(const double* a, const double* b, double* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_div_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) c[i] = a[i] / b[i];
}

static void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] = alpha * x[i] + y[i];
}

static void scale(double alpha, double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

static double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

static double sum(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

static double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

// c_row[j] += av * b_row[j]
static inline void fma_row(double av, const double* brow, double* crow, std::size_t n) {
    const __m256d va = _mm256_set1_pd(av);
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
        _mm256_storeu_pd(crow + j,
                         _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), _mm256_loadu_pd(crow + j)));
        _mm256_storeu_pd(crow + j + 4,
                         _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j + 4), _mm256_loadu_pd(crow + j + 4)));
    }
    for (; j + 4 <= n; j += 4)
        _mm256_storeu_pd(crow + j,
                         _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), _mm256_loadu_pd(crow + j)));
    for (; j < n; ++j) crow[j] += av * brow[j];
}

// Blocked over the n dimension so the active B panel stays in L2.
static constexpr std::size_t kNBlock = 512;

static void matmul(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n,
                   bool ta, bool tb) {
    std::memset(c, 0, m * n * sizeof(double));
    if (!ta && !tb) {
        for (std::size_t jb = 0; jb < n; jb += kNBlock) {
            const std::size_t je = jb + (n - jb < kNBlock ? n - jb : kNBlock);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p)
                    fma_row(a[i * k + p], b + p * n + jb, c + i * n + jb, je - jb);
        }
    } else if (!ta && tb) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                c[i * n + j] = dot(a + i * k, b + j * k, k);
    } else if (ta && !tb) {
        for (std::size_t jb = 0; jb < n; jb += kNBlock) {
            const std::size_t je = jb + (n - jb < kNBlock ? n - jb : kNBlock);
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t i = 0; i < m; ++i)
                    fma_row(a[p * m + i], b + p * n + jb, c + i * n + jb, je - jb);
        }
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[j * k + p];
                c[i * n + j] = s;
            }
    }
}

}  // namespace avx2

extern const KernelTable kAvx2Table = {
    avx2::add, avx2::sub, avx2::mul, avx2::div,
    avx2::axpy, avx2::scale, avx2::sum, avx2::dot, avx2::matmul,
};

}  // namespace dhvae::kernels

#endif  // x86-64
