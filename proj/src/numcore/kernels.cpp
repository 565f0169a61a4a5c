#include "pathweaver/numcore/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pathweaver::num::kernels {

namespace {

int g_threads = 0;  // 0 = OpenMP default

inline void zero_rows(Real* c, std::size_t rows, std::size_t n) { std::memset(c, 0, sizeof(Real) * rows * n); }

// Row i of C = A[i,:] * B.
inline void nn_row(const Real* a, const Real* b, Real* c, std::size_t i, std::size_t k, std::size_t n) {
  const Real* arow = a + i * k;
  Real* crow = c + i * n;
  for (std::size_t p = 0; p < k; ++p) {
    const Real av = arow[p];
    const Real* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

// Row i of C = A[:,i]^T * B.
inline void tn_row(const Real* a, const Real* b, Real* c, std::size_t i, std::size_t m, std::size_t k,
                   std::size_t n) {
  Real* crow = c + i * n;
  for (std::size_t p = 0; p < k; ++p) {
    const Real av = a[p * m + i];
    const Real* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

// Row i of C = A[i,:] * B^T.
inline void nt_row(const Real* a, const Real* b, Real* c, std::size_t i, std::size_t k, std::size_t n) {
  const Real* arow = a + i * k;
  Real* crow = c + i * n;
  for (std::size_t j = 0; j < n; ++j) {
    const Real* brow = b + j * k;
    Real acc = 0;
    for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
    crow[j] += acc;
  }
}

inline void softmax_row(const Real* x, Real* y, std::size_t cols) {
  Real mx = x[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  Real total = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    total += y[j];
  }
  const Real inv = Real(1) / total;
  for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}

inline bool go_parallel(std::size_t work) { return work >= kParallelWorkThreshold && max_threads() > 1; }

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) { g_threads = std::max(1, n); }

namespace serial {

void matmul_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  if (!accumulate) zero_rows(c, m, n);
  for (std::size_t i = 0; i < m; ++i) nn_row(a, b, c, i, k, n);
}

void matmul_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  if (!accumulate) zero_rows(c, m, n);
  for (std::size_t i = 0; i < m; ++i) tn_row(a, b, c, i, m, k, n);
}

void matmul_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  if (!accumulate) zero_rows(c, m, n);
  for (std::size_t i = 0; i < m; ++i) nt_row(a, b, c, i, k, n);
}

void softmax_rows(const Real* x, Real* y, std::size_t rows, std::size_t cols) {
  if (cols == 0) return;
  for (std::size_t i = 0; i < rows; ++i) softmax_row(x + i * cols, y + i * cols, cols);
}

}  // namespace serial

namespace parallel {

void matmul_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  if (!go_parallel(m * k * n)) return serial::matmul_nn(a, b, c, m, k, n, accumulate);
  if (!accumulate) zero_rows(c, m, n);
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (std::ptrdiff_t i = 0; i < rows; ++i) nn_row(a, b, c, static_cast<std::size_t>(i), k, n);
}

void matmul_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  if (!go_parallel(m * k * n)) return serial::matmul_tn(a, b, c, m, k, n, accumulate);
  if (!accumulate) zero_rows(c, m, n);
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (std::ptrdiff_t i = 0; i < rows; ++i) tn_row(a, b, c, static_cast<std::size_t>(i), m, k, n);
}

void matmul_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  if (!go_parallel(m * k * n)) return serial::matmul_nt(a, b, c, m, k, n, accumulate);
  if (!accumulate) zero_rows(c, m, n);
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (std::ptrdiff_t i = 0; i < rows; ++i) nt_row(a, b, c, static_cast<std::size_t>(i), k, n);
}

void softmax_rows(const Real* x, Real* y, std::size_t rows, std::size_t cols) {
  if (cols == 0) return;
  if (!go_parallel(rows * cols * 8)) return serial::softmax_rows(x, y, rows, cols);
  const auto r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (std::ptrdiff_t i = 0; i < r; ++i) {
    softmax_row(x + static_cast<std::size_t>(i) * cols, y + static_cast<std::size_t>(i) * cols, cols);
  }
}

}  // namespace parallel

}  // namespace pathweaver::num::kernels
