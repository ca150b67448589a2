// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/numerics/layers.hpp"

#include <algorithm>
#include <cmath>

namespace forcedistill {

Linear Linear::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                      RngStream& rng, bool trainable, bool with_bias, Real stddev) {
  if (stddev < 0) stddev = Real(1) / std::sqrt(Real(in));
  Linear layer;
  layer.weight = store.normal(name + ".weight", {in, out}, stddev, rng, trainable);
  if (with_bias) layer.bias = store.constant(name + ".bias", {1, out}, Real(0), trainable);
  return layer;
}

ad::Var Linear::operator()(const ad::Var& x) const {
  ad::Var y = ad::matmul(x, weight->var());
  return bias ? ad::add_row(y, bias->var()) : y;
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, std::size_t width, Real eps,
                            bool trainable) {
  LayerNorm ln;
  ln.gain = store.constant(name + ".gain", {1, width}, Real(1), trainable);
  ln.bias = store.constant(name + ".bias", {1, width}, Real(0), trainable);
  ln.eps = eps;
  return ln;
}

ad::Var LayerNorm::operator()(const ad::Var& x) const { return ad::layernorm(x, gain->var(), bias->var(), eps); }

FeedForward FeedForward::create(ParameterStore& store, const std::string& name, std::size_t width,
                                std::size_t hidden, RngStream& rng, bool trainable) {
  return {Linear::create(store, name + ".up", width, hidden, rng, trainable),
          Linear::create(store, name + ".down", hidden, width, rng, trainable)};
}

ad::Var FeedForward::operator()(const ad::Var& x) const { return down(ad::gelu(up(x))); }

Tensor sinusoidal_encoding(std::size_t positions, std::size_t width, Real base) {
  Tensor pe({positions, width});
  for (std::size_t pos = 0; pos < positions; ++pos) {
    for (std::size_t i = 0; i < width; ++i) {
      const Real exponent = Real(2 * (i / 2)) / Real(width);
      const Real angle = Real(pos) / std::pow(base, exponent);
      pe.at(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Tensor scalar_encoding(std::span<const Real> values, std::size_t width) {
  Tensor out({values.size(), width});
  const std::size_t half = width / 2;
  for (std::size_t r = 0; r < values.size(); ++r) {
    for (std::size_t i = 0; i < half; ++i) {
      // Frequencies from 1 to ~100 cycles over [0, 1].
      const Real freq = std::pow(Real(100), Real(i) / Real(std::max<std::size_t>(half - 1, 1)));
      const Real angle = Real(2) * Real(3.14159265358979323846) * freq * values[r];
      out.at(r, 2 * i) = std::sin(angle);
      out.at(r, 2 * i + 1) = std::cos(angle);
    }
  }
  return out;
}

}  // namespace forcedistill
