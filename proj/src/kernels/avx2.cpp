// SPDX-License-Identifier: Apache-2.0
// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after a runtime CPU check. Scalar tails use std::fma so
// that every element sees the same fused rounding regardless of where it falls
// in the vector blocking.
#include "s2s/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#define S2S_HAVE_AVX2 1
#include <immintrin.h>

#include <cmath>
#include <vector>
#endif

namespace s2s::kernels::avx2 {

#ifdef S2S_HAVE_AVX2
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Four rows of C, columns [j, j+8).
inline void nn_block_4x8(std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                         std::size_t j) {
  __m256d c00 = _mm256_loadu_pd(c + 0 * n + j), c01 = _mm256_loadu_pd(c + 0 * n + j + 4);
  __m256d c10 = _mm256_loadu_pd(c + 1 * n + j), c11 = _mm256_loadu_pd(c + 1 * n + j + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * n + j), c21 = _mm256_loadu_pd(c + 2 * n + j + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * n + j), c31 = _mm256_loadu_pd(c + 3 * n + j + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
    const __m256d b1 = _mm256_loadu_pd(b + p * n + j + 4);
    __m256d av = _mm256_broadcast_sd(a + 0 * k + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + 1 * k + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * k + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * k + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c + 0 * n + j, c00);
  _mm256_storeu_pd(c + 0 * n + j + 4, c01);
  _mm256_storeu_pd(c + 1 * n + j, c10);
  _mm256_storeu_pd(c + 1 * n + j + 4, c11);
  _mm256_storeu_pd(c + 2 * n + j, c20);
  _mm256_storeu_pd(c + 2 * n + j + 4, c21);
  _mm256_storeu_pd(c + 3 * n + j, c30);
  _mm256_storeu_pd(c + 3 * n + j + 4, c31);
}

// One row of C, columns [j, n).
inline void nn_row_tail(std::size_t n, std::size_t k, const double* arow, const double* b,
                        double* crow, std::size_t j) {
  for (; j + 4 <= n; j += 4) {
    __m256d acc = _mm256_loadu_pd(crow + j);
    for (std::size_t p = 0; p < k; ++p)
      acc = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + p), _mm256_loadu_pd(b + p * n + j), acc);
    _mm256_storeu_pd(crow + j, acc);
  }
  for (; j < n; ++j) {
    double acc = crow[j];
    for (std::size_t p = 0; p < k; ++p) acc = std::fma(arow[p], b[p * n + j], acc);
    crow[j] = acc;
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* ab = a + i * k;
    double* cb = c + i * n;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) nn_block_4x8(n, k, ab, b, cb, j);
    for (std::size_t r = 0; r < 4; ++r) nn_row_tail(n, k, ab + r * k, b, cb + r * n, j);
  }
  for (; i < m; ++i) nn_row_tail(n, k, a + i * k, b, c + i * n, 0);
}

inline double dot_impl(std::size_t k, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t p = 0;
  for (; p + 8 <= k; p += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + p), _mm256_loadu_pd(y + p), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + p + 4), _mm256_loadu_pd(y + p + 4), acc1);
  }
  for (; p + 4 <= k; p += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + p), _mm256_loadu_pd(y + p), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; p < k; ++p) acc = std::fma(x[p], y[p], acc);
  return acc;
}

// Row-major [rows, cols] -> [cols, rows] into a reusable scratch buffer.
const double* transposed(std::size_t rows, std::size_t cols, const double* x) {
  thread_local std::vector<double> scratch;
  scratch.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) scratch[c * rows + r] = x[r * cols + c];
  return scratch.data();
}

// Both transposed forms reuse the blocked kernel, so every element is still a
// sequential fused sum over p = 0..k-1.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  gemm_nn(m, n, k, a, transposed(n, k, b), c);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  gemm_nn(m, n, k, transposed(k, m, a), b, c);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

double dot(std::size_t n, const double* x, const double* y) { return dot_impl(n, x, y); }

void add(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

}  // namespace

const KernelTable table{gemm_nn, gemm_nt, gemm_tn, axpy, dot, add, mul};
bool compiled() { return true; }

#else

const KernelTable table{nullptr, nullptr, nullptr, nullptr, nullptr, nullptr, nullptr};
bool compiled() { return false; }

#endif

}  // namespace s2s::kernels::avx2
