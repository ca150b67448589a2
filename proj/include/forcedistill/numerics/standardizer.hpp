// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "forcedistill/numerics/tensor.hpp"

namespace forcedistill {

/// Per-column affine normalization x' = (x - mean) / std, with statistics
/// frozen at construction.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<Real> mean, std::vector<Real> stddev);

  // Statistics of the rows of `samples` ([n x d]); std floored at min_std.
  static Standardizer fit(const Tensor& samples, Real min_std = Real(1e-6));
  static Standardizer identity(std::size_t dim);

  std::size_t dim() const noexcept { return mean_.size(); }
  const std::vector<Real>& mean() const noexcept { return mean_; }
  const std::vector<Real>& stddev() const noexcept { return stddev_; }

  Tensor normalize(const Tensor& x) const;
  Tensor denormalize(const Tensor& x) const;
  void normalize_in_place(std::span<Real> row) const;

  friend bool operator==(const Standardizer&, const Standardizer&) = default;

 private:
  std::vector<Real> mean_;
  std::vector<Real> stddev_;
};

}  // namespace forcedistill
