#pragma once

#include <cstddef>
#include <vector>

#include "weakmcn/numcore/tensor.hpp"

namespace weakmcn::nc::kernels {

// crow[j] += sum_q a[q] * b[q][j] for four rows of B at once, so each
// output element is loaded and stored once per four products.
inline void axpy4(std::size_t m, const Real a[4], const Real* const b[4], Real* crow) {
  for (std::size_t j = 0; j < m; ++j) crow[j] += a[0] * b[0][j] + a[1] * b[1][j] + a[2] * b[2][j] + a[3] * b[3][j];
}

inline void axpy1(std::size_t m, Real a, const Real* b, Real* crow) {
  for (std::size_t j = 0; j < m; ++j) crow[j] += a * b[j];
}

// C(n x m) += A(n x k) * B(k x m)
inline void gemm_nn(std::size_t n, std::size_t k, std::size_t m, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < n; ++i) {
    Real* crow = c + i * m;
    const Real* arow = a + i * k;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const Real av[4] = {arow[p], arow[p + 1], arow[p + 2], arow[p + 3]};
      if (av[0] == Real{0} && av[1] == Real{0} && av[2] == Real{0} && av[3] == Real{0}) continue;
      const Real* const rows[4] = {b + p * m, b + (p + 1) * m, b + (p + 2) * m, b + (p + 3) * m};
      axpy4(m, av, rows, crow);
    }
    for (; p < k; ++p)
      if (arow[p] != Real{0}) axpy1(m, arow[p], b + p * m, crow);
  }
}

// C(n x m) += A(n x k) * B(m x k)^T
// B is transposed into a scratch buffer first so the inner loop runs over
// contiguous memory; a strided dot product does not vectorize.
inline void gemm_nt(std::size_t n, std::size_t k, std::size_t m, const Real* a, const Real* b, Real* c) {
  thread_local std::vector<Real> bt;
  bt.resize(k * m);
  for (std::size_t j = 0; j < m; ++j) {
    const Real* brow = b + j * k;
    for (std::size_t p = 0; p < k; ++p) bt[p * m + j] = brow[p];
  }
  gemm_nn(n, k, m, a, bt.data(), c);
}

// C(n x m) += A(k x n)^T * B(k x m)
inline void gemm_tn(std::size_t n, std::size_t k, std::size_t m, const Real* a, const Real* b, Real* c) {
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const Real* const rows[4] = {b + p * m, b + (p + 1) * m, b + (p + 2) * m, b + (p + 3) * m};
    for (std::size_t i = 0; i < n; ++i) {
      const Real av[4] = {a[p * n + i], a[(p + 1) * n + i], a[(p + 2) * n + i], a[(p + 3) * n + i]};
      if (av[0] == Real{0} && av[1] == Real{0} && av[2] == Real{0} && av[3] == Real{0}) continue;
      axpy4(m, av, rows, c + i * m);
    }
  }
  for (; p < k; ++p)
    for (std::size_t i = 0; i < n; ++i)
      if (a[p * n + i] != Real{0}) axpy1(m, a[p * n + i], b + p * m, c + i * m);
}

}  // namespace weakmcn::nc::kernels
