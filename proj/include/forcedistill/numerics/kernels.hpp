// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "forcedistill/numerics/tensor.hpp"

// Dense kernels on raw row-major buffers. Every output element is accumulated
// over the inner index in ascending order regardless of the outer sizes, so a
// row of the result is bit-identical whether or not other rows are present.
namespace forcedistill::kernels {

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n);

// c[m x k] += a[m x n] * b[k x n]^T
void gemm_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t n, std::size_t k);

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n);

}  // namespace forcedistill::kernels
