#include "touchfetch/simd.hpp"

#if defined(TOUCHFETCH_HAVE_AVX2_TU)
#include <immintrin.h>

namespace touchfetch::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Two output rows by eight columns per register tile; the k loop streams one
// row of B per iteration.
void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c) {
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d r00 = _mm256_loadu_pd(c0 + j), r01 = _mm256_loadu_pd(c0 + j + 4);
      __m256d r10 = _mm256_loadu_pd(c1 + j), r11 = _mm256_loadu_pd(c1 + j + 4);
      for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * n + j;
        const __m256d b0 = _mm256_loadu_pd(bp), b1 = _mm256_loadu_pd(bp + 4);
        const __m256d x0 = _mm256_broadcast_sd(a0 + p), x1 = _mm256_broadcast_sd(a1 + p);
        r00 = _mm256_fmadd_pd(x0, b0, r00);
        r01 = _mm256_fmadd_pd(x0, b1, r01);
        r10 = _mm256_fmadd_pd(x1, b0, r10);
        r11 = _mm256_fmadd_pd(x1, b1, r11);
      }
      _mm256_storeu_pd(c0 + j, r00); _mm256_storeu_pd(c0 + j + 4, r01);
      _mm256_storeu_pd(c1 + j, r10); _mm256_storeu_pd(c1 + j + 4, r11);
    }
    for (; j < n; ++j) {
      double s0 = c0[j], s1 = c1[j];
      for (std::size_t p = 0; p < k; ++p) {
        s0 += a0[p] * b[p * n + j];
        s1 += a1[p] * b[p * n + j];
      }
      c0[j] = s0; c1[j] = s1;
    }
  }
  for (; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) axpy_avx2(ai[p], b + p * n, ci, n);
  }
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c) {
  if (k < 4) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
        c[i * n + j] += s;
      }
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    std::size_t j = 0;
    for (; j + 2 <= n; j += 2) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d x = _mm256_loadu_pd(ai + p);
        s0 = _mm256_fmadd_pd(x, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(x, _mm256_loadu_pd(b1 + p), s1);
      }
      double t0 = hsum(s0), t1 = hsum(s1);
      for (; p < k; ++p) {
        t0 += ai[p] * b0[p];
        t1 += ai[p] * b1[p];
      }
      c[i * n + j] += t0;
      c[i * n + j + 1] += t1;
    }
    for (; j < n; ++j) c[i * n + j] += dot_avx2(ai, b + j * k, k);
  }
}

void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) axpy_avx2(ap[i], bp, c + i * n, n);
  }
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  static const KernelTable table{Isa::Avx2, dot_avx2, axpy_avx2,
                                 gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2};
  return supported ? &table : nullptr;
}

}  // namespace touchfetch::simd

#else

namespace touchfetch::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace touchfetch::simd

#endif
