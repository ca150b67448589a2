// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/common/model_config.hpp"

#include "forcedistill/common/error.hpp"

namespace forcedistill {

void ModelConfig::validate() const {
  if (hidden_dim == 0 || heads == 0 || hidden_dim % heads != 0)
    throw ConfigError("hidden_dim must be a positive multiple of heads");
  if (hidden_dim % 2 != 0) throw ConfigError("hidden_dim must be even for sinusoidal encodings");
  if (patch_size == 0 || image_size % patch_size != 0)
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                      std::to_string(patch_size));
  if (image_channels == 0 || vocab_size == 0) throw ConfigError("image_channels and vocab_size must be positive");
  if (state_dim == 0 || force_dim == 0 || action_dim == 0 || horizon == 0)
    throw ConfigError("state, force and action dimensions and horizon must be positive");
  if (frozen_layers_used > frozen_layers_total)
    throw ConfigError("frozen_layers_used exceeds frozen_layers_total");
  if (policy_layers == 0) throw ConfigError("policy_layers must be positive");
  if (!(layernorm_eps > 0)) throw ConfigError("layernorm_eps must be positive");
}

}  // namespace forcedistill
