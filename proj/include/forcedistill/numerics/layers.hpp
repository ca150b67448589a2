// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "forcedistill/numerics/parameter.hpp"

namespace forcedistill {

/// y = x W + b. Weights default to N(0, 1/fan_in).
struct Linear {
  ParameterPtr weight;
  ParameterPtr bias;  // may be null

  static Linear create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                       RngStream& rng, bool trainable = true, bool with_bias = true, Real stddev = Real(-1));
  ad::Var operator()(const ad::Var& x) const;
  std::size_t in_features() const { return weight->value().rows(); }
  std::size_t out_features() const { return weight->value().cols(); }
};

struct LayerNorm {
  ParameterPtr gain;
  ParameterPtr bias;
  Real eps = Real(1e-5);

  static LayerNorm create(ParameterStore& store, const std::string& name, std::size_t width, Real eps,
                          bool trainable = true);
  ad::Var operator()(const ad::Var& x) const;
};

/// Two-layer GELU MLP.
struct FeedForward {
  Linear up;
  Linear down;

  static FeedForward create(ParameterStore& store, const std::string& name, std::size_t width,
                            std::size_t hidden, RngStream& rng, bool trainable = true);
  ad::Var operator()(const ad::Var& x) const;
};

/// Fixed sinusoidal encodings, [positions x width]; even columns sin, odd cos.
Tensor sinusoidal_encoding(std::size_t positions, std::size_t width, Real base = Real(10000));

/// Sinusoidal features of a scalar in [0, 1], one row per value.
Tensor scalar_encoding(std::span<const Real> values, std::size_t width);

}  // namespace forcedistill
