// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "forcedistill/numerics/tensor.hpp"

namespace forcedistill {

/// Architecture sizes shared by every module of the policy.
struct ModelConfig {
  std::size_t hidden_dim = 64;
  std::size_t heads = 4;
  std::size_t ffn_multiplier = 4;

  std::size_t image_channels = 3;
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t vocab_size = 1024;

  std::size_t state_dim = 5;
  std::size_t force_dim = 3;
  std::size_t action_dim = 3;
  std::size_t horizon = 8;

  std::size_t frozen_layers_total = 4;
  std::size_t frozen_layers_used = 2;
  std::size_t policy_layers = 2;

  Real layernorm_eps = Real(1e-5);
  Real query_init_std = Real(0.02);

  std::size_t head_dim() const { return hidden_dim / heads; }
  std::size_t ffn_dim() const { return hidden_dim * ffn_multiplier; }
  std::size_t vision_tokens() const {
    const std::size_t side = image_size / patch_size;
    return side * side;
  }
  std::size_t image_values() const { return image_channels * image_size * image_size; }

  // Throws ConfigError on inconsistent sizes.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace forcedistill
