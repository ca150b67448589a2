// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "forcedistill/actionexpert/flow_matching.hpp"
#include "forcedistill/common/model_config.hpp"
#include "forcedistill/numerics/layers.hpp"
#include "forcedistill/numerics/standardizer.hpp"

namespace forcedistill {

struct PolicyLayer {
  LayerNorm self_norm;
  Linear self_q, self_k, self_v, self_o;
  LayerNorm cross_norm;
  LayerNorm memory_norm;
  Linear cross_q, cross_k, cross_v, cross_o;
  LayerNorm ffn_norm;
  FeedForward ffn;
};

/// Transformer velocity network over H_a action tokens, cross-attending to
/// every backbone feature row.
class PolicyHead {
 public:
  PolicyHead(ParameterStore& store, const ModelConfig& config, RngStream& rng);

  std::size_t horizon() const noexcept { return horizon_; }
  std::size_t action_dim() const noexcept { return action_dim_; }
  const Linear& output() const noexcept { return output_; }

  // noisy: [batch*H_a x d_a], taus: batch values, features: [batch*rows x D].
  ad::Var predict_velocity(const ad::Var& noisy, std::span<const Real> taus, const ad::Var& features,
                           std::size_t feature_rows) const;

  // Integrates the learned field for one sample's features and returns the
  // de-normalized chunk [H_a x d_a].
  Tensor sample_actions(const ad::Var& features, std::size_t feature_rows, int steps, RngStream& rng,
                        const Standardizer& action_norm) const;

 private:
  std::size_t width_;
  std::size_t heads_;
  std::size_t horizon_;
  std::size_t action_dim_;
  Linear action_in_;
  Linear tau_in_;
  Linear tau_out_;
  Tensor positions_;
  std::vector<PolicyLayer> layers_;
  LayerNorm final_norm_;
  Linear output_;
};

}  // namespace forcedistill
