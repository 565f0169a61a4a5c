#pragma once

#include <cstddef>

#include "pathweaver/numcore/real.hpp"

// Dense inner loops. Each kernel has a serial reference and an OpenMP version
// that partitions output rows across threads. Both accumulate every output
// element in the same order, so their results are bitwise identical for any
// thread count.
//
// All matrices are row-major and densely packed. When `accumulate` is false
// the output is overwritten, otherwise added to.
namespace pathweaver::num::kernels {

namespace serial {
// C[m x n] (+)= A[m x k] * B[k x n]
void matmul_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
// C[m x n] (+)= A[k x m]^T * B[k x n]
void matmul_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
// C[m x n] (+)= A[m x k] * B[n x k]^T
void matmul_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
// Row-wise softmax of x[rows x cols] into y, max-subtracted.
void softmax_rows(const Real* x, Real* y, std::size_t rows, std::size_t cols);
}  // namespace serial

namespace parallel {
void matmul_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
void matmul_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
void matmul_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
void softmax_rows(const Real* x, Real* y, std::size_t rows, std::size_t cols);
}  // namespace parallel

// Work (m*k*n multiply-adds) below which the parallel kernels stay on the
// calling thread.
inline constexpr std::size_t kParallelWorkThreshold = 1u << 16;

// Number of threads the parallel kernels may use (1 when built without OpenMP).
int max_threads();
// Caps the parallel kernels to `n` threads; 1 gives single-thread mode.
void set_threads(int n);

// Dispatch used by the autodiff ops.
inline void matmul_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate) {
  parallel::matmul_nn(a, b, c, m, k, n, accumulate);
}
inline void matmul_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate) {
  parallel::matmul_tn(a, b, c, m, k, n, accumulate);
}
inline void matmul_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate) {
  parallel::matmul_nt(a, b, c, m, k, n, accumulate);
}
inline void softmax_rows(const Real* x, Real* y, std::size_t rows, std::size_t cols) {
  parallel::softmax_rows(x, y, rows, cols);
}

}  // namespace pathweaver::num::kernels
