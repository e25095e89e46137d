#pragma once

// Row-major dense building blocks shared by the encoder architectures. All
// backward functions accumulate into their gradient outputs.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "touchfetch/simd.hpp"

namespace touchfetch::nn {

using Buffer = std::vector<double>;

// Y[t x out] = X[t x in] W[in x out] + b
inline void linear(std::size_t t, std::size_t in, std::size_t out, const double* x, const double* w,
                   const double* b, double* y) {
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < out; ++j) y[i * out + j] = b[j];
  simd::gemm_nn(t, out, in, x, w, y);
}

// dW += X^T dY, db += colsum(dY), dX += dY W^T (dX may be null)
inline void linear_backward(std::size_t t, std::size_t in, std::size_t out, const double* x, const double* w,
                            const double* dy, double* dx, double* dw, double* db) {
  simd::gemm_tn(in, out, t, x, dy, dw);
  for (std::size_t i = 0; i < t; ++i) simd::axpy(1.0, dy + i * out, db, out);
  if (dx) simd::gemm_nt(t, in, out, dy, w, dx);
}

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Buffer xhat;  // t x d
  Buffer rstd;  // t
};

inline void layer_norm(std::size_t t, std::size_t d, const double* x, const double* g, const double* b, double* y,
                       LayerNormCache& cache) {
  cache.xhat.resize(t * d);
  cache.rstd.resize(t);
  for (std::size_t i = 0; i < t; ++i) {
    const double* xi = x + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.rstd[i] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (xi[j] - mean) * rs;
      cache.xhat[i * d + j] = xh;
      y[i * d + j] = g[j] * xh + b[j];
    }
  }
}

inline void layer_norm_backward(std::size_t t, std::size_t d, const LayerNormCache& cache, const double* g,
                                const double* dy, double* dx, double* dg, double* db) {
  std::vector<double> dxh(d);
  for (std::size_t i = 0; i < t; ++i) {
    const double* xh = cache.xhat.data() + i * d;
    const double* dyi = dy + i * d;
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dg[j] += dyi[j] * xh[j];
      db[j] += dyi[j];
      dxh[j] = dyi[j] * g[j];
      s1 += dxh[j];
      s2 += dxh[j] * xh[j];
    }
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j)
      dx[i * d + j] += cache.rstd[i] * (dxh[j] - inv_d * s1 - xh[j] * inv_d * s2);
  }
}

// tanh approximation of GELU
inline double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double u = c * (x + 0.044715 * x * x * x);
  const double th = std::tanh(u);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Mean over rows, affine head, L2 normalization.
struct HeadCache {
  Buffer pooled;  // d
  Buffer u;       // e, before normalization
  double norm = 0.0;
};

inline void pool_head(std::size_t t, std::size_t d, std::size_t e, const double* x, const double* w,
                      const double* b, HeadCache& cache, std::vector<double>& out) {
  cache.pooled.assign(d, 0.0);
  for (std::size_t i = 0; i < t; ++i) simd::axpy(1.0 / static_cast<double>(t), x + i * d, cache.pooled.data(), d);
  cache.u.resize(e);
  linear(1, d, e, cache.pooled.data(), w, b, cache.u.data());
  cache.norm = std::sqrt(simd::dot(cache.u.data(), cache.u.data(), e));
  out.resize(e);
  const double inv = cache.norm > 0.0 ? 1.0 / cache.norm : 0.0;
  for (std::size_t j = 0; j < e; ++j) out[j] = cache.u[j] * inv;
}

// Returns d(loss)/dx for every row of x (all rows share the pooled gradient).
inline std::vector<double> pool_head_backward(std::size_t d, std::size_t e, const double* w, const HeadCache& cache,
                                              std::span<const double> out, std::span<const double> d_out,
                                              double* dw, double* db) {
  std::vector<double> du(e);
  if (cache.norm > 0.0) {
    const double proj = simd::dot(out.data(), d_out.data(), e);
    for (std::size_t j = 0; j < e; ++j) du[j] = (d_out[j] - out[j] * proj) / cache.norm;
  }
  std::vector<double> dpooled(d, 0.0);
  linear_backward(1, d, e, cache.pooled.data(), w, du.data(), dpooled.data(), dw, db);
  return dpooled;
}

}  // namespace touchfetch::nn
