// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

// Dense f64 inner loops. Every routine has a scalar reference implementation
// and, on x86-64, an AVX2+FMA variant picked at runtime. All matrices are
// row-major and contiguous. The gemm routines accumulate into C.
//
// Summation order for any output element depends only on the reduction
// length k, never on m or n, so a row of a product is reproducible when the
// surrounding batch changes shape.

namespace s2s::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  // C[m,n] += A[m,k] * B[k,n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C[m,n] += A[m,k] * B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C[m,n] += A[k,m]^T * B[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // out = x + y ; out = x * y  (out may alias either input)
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
};

namespace scalar {
extern const KernelTable table;
}
namespace avx2 {
// Null function pointers when the build target has no AVX2 path.
extern const KernelTable table;
bool compiled();
}  // namespace avx2

bool available(Isa isa);
const KernelTable& table(Isa isa);

// Kernel set used by the tensor ops. Chosen once at startup: the S2S_KERNELS
// environment variable ("scalar" or "avx2") overrides CPU detection.
const KernelTable& active();
Isa active_isa();
void select(Isa isa);
const char* name(Isa isa);

// Keeps freed tensor buffers in the heap instead of returning them to the OS
// on every step. No-op outside glibc.
void tune_allocator();

}  // namespace s2s::kernels
