// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/numerics/kernels.hpp"

#include <vector>

namespace forcedistill::kernels {

void gemm_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = c + i * n;
    const Real* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t n, std::size_t k) {
  // Materialize b^T so the inner loop runs over contiguous memory.
  std::vector<Real> bt(n * k);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + r] = b[r * n + j];
  gemm_nn(a, bt.data(), c, m, n, k);
}

void gemm_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    const Real* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      Real* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace forcedistill::kernels
