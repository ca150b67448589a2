// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/numerics/rng.hpp"

#include <random>

namespace forcedistill {

std::uint64_t mix64(std::uint64_t x) {
  // SplitMix64 finalizer.
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ mix64(b + 0x632be59bd9b4e019ULL));
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), key_(mix64(seed)) {}

RngStream::result_type RngStream::operator()() {
  return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
}

RngStream RngStream::split(std::uint64_t key) const { return RngStream(hash_combine(seed_, key)); }

Real RngStream::uniform() {
  return static_cast<Real>(static_cast<double>((*this)() >> 11) * 0x1.0p-53);
}

Real RngStream::uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

Real RngStream::normal() { return std::normal_distribution<Real>(Real(0), Real(1))(*this); }

Real RngStream::gamma(Real shape) { return std::gamma_distribution<Real>(shape, Real(1))(*this); }

Real RngStream::beta(Real a, Real b) {
  const Real x = gamma(a);
  const Real y = gamma(b);
  return x / (x + y);
}

Tensor RngStream::normal_tensor(Shape shape, Real stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = stddev * normal();
  return t;
}

}  // namespace forcedistill
