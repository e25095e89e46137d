#pragma once

// Dense double-precision kernels used by the sequence encoder.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active table is chosen once at startup from CPUID and
// can be forced with the TOUCHFETCH_SIMD environment variable
// ("scalar" or "avx2"). The variants differ only in rounding (FMA and the
// lane-split reductions in dot/gemm_nt).

#include <cstddef>
#include <string_view>

namespace touchfetch::simd {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c);
};

const KernelTable& scalar_kernels();
// Null when the build has no AVX2 translation unit or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

// Table selected for this process.
const KernelTable& active();
// Overrides the selection (tests use this to compare variants).
void set_active(Isa isa);
std::string_view isa_name(Isa isa);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  active().gemm_nn(m, n, k, a, b, c);
}
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  active().gemm_nt(m, n, k, a, b, c);
}
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  active().gemm_tn(m, n, k, a, b, c);
}

}  // namespace touchfetch::simd
