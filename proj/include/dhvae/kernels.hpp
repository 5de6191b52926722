#pragma once

// Hot arithmetic loops, double precision. Every kernel exists as a scalar
// reference implementation; on x86-64 an AVX2+FMA variant is selected at
// runtime when the CPU supports it. The two variants are tested against each
// other (see tests/test_kernels.cpp). Transcendentals stay in scalar code on
// purpose: they are a tiny fraction of runtime and libm keeps the numerics
// identical across the two lanes.
//
// All pointers are to contiguous buffers; no aliasing between dst and srcs
// unless the signature says in-place.

#include <cstddef>
#include <string>

namespace dhvae::kernels {

enum class Isa { scalar, avx2 };

// Currently selected lane. Defaults to the best the CPU supports; can be
// forced via set_isa() or the DHVAE_KERNEL_ISA env var ("scalar"/"avx2").
Isa active_isa();
void set_isa(Isa isa);
bool cpu_has_avx2();
std::string isa_name(Isa isa);

struct KernelTable {
    // c[i] = a[i] op b[i]
    void (*add)(const double* a, const double* b, double* c, std::size_t n);
    void (*sub)(const double* a, const double* b, double* c, std::size_t n);
    void (*mul)(const double* a, const double* b, double* c, std::size_t n);
    void (*div)(const double* a, const double* b, double* c, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // x[i] *= alpha
    void (*scale)(double alpha, double* x, std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    double (*dot)(const double* a, const double* b, std::size_t n);
    // C (m x n) = op(A) * op(B), row-major, op is transpose when ta/tb set.
    // A is (m x k) or (k x m) when ta; B is (k x n) or (n x k) when tb.
    void (*matmul)(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n,
                   bool ta, bool tb);
};

const KernelTable& active();
const KernelTable& table_for(Isa isa);

}  // namespace dhvae::kernels
