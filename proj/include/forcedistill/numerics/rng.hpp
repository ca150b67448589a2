// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>

#include "forcedistill/numerics/tensor.hpp"

namespace forcedistill {

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

/// Counter-based random stream. Output i depends only on (key, i), and split()
/// derives child streams from the key alone, so per-episode and per-batch
/// draws do not depend on how many draws other consumers made.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  RngStream split(std::uint64_t key) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t position() const noexcept { return counter_; }
  void seek(std::uint64_t position) noexcept { counter_ = position; }

  Real uniform();  // [0, 1)
  Real uniform(Real lo, Real hi);
  Real normal();
  Real gamma(Real shape);
  Real beta(Real a, Real b);
  Tensor normal_tensor(Shape shape, Real stddev = Real(1));

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace forcedistill
