// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/numerics/standardizer.hpp"

#include <algorithm>
#include <cmath>

#include "forcedistill/common/error.hpp"

namespace forcedistill {

Standardizer::Standardizer(std::vector<Real> mean, std::vector<Real> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
  if (mean_.size() != stddev_.size()) throw DimensionError("standardizer: mean/std length mismatch");
  for (auto s : stddev_)
    if (!(s > 0)) throw ConfigError("standardizer: standard deviations must be positive");
}

Standardizer Standardizer::fit(const Tensor& samples, Real min_std) {
  const std::size_t n = samples.rows(), d = samples.cols();
  if (n == 0) throw DimensionError("standardizer: no samples");
  std::vector<Real> mean(d, 0), var(d, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += samples.at(i, j);
  for (auto& m : mean) m /= Real(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) var[j] += (samples.at(i, j) - mean[j]) * (samples.at(i, j) - mean[j]);
  std::vector<Real> stddev(d);
  for (std::size_t j = 0; j < d; ++j) stddev[j] = std::max(std::sqrt(var[j] / Real(n)), min_std);
  return Standardizer(std::move(mean), std::move(stddev));
}

Standardizer Standardizer::identity(std::size_t dim) {
  return Standardizer(std::vector<Real>(dim, 0), std::vector<Real>(dim, 1));
}

Tensor Standardizer::normalize(const Tensor& x) const {
  if (x.cols() != dim()) throw DimensionError("standardizer: width " + std::to_string(x.cols()) + " vs " + std::to_string(dim()));
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) normalize_in_place(out.row(i));
  return out;
}

void Standardizer::normalize_in_place(std::span<Real> row) const {
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean_[j]) / stddev_[j];
}

Tensor Standardizer::denormalize(const Tensor& x) const {
  if (x.cols() != dim()) throw DimensionError("standardizer: width " + std::to_string(x.cols()) + " vs " + std::to_string(dim()));
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < dim(); ++j) out.at(i, j) = out.at(i, j) * stddev_[j] + mean_[j];
  return out;
}

}  // namespace forcedistill
