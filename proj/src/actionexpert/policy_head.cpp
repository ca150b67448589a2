// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/actionexpert/policy_head.hpp"

#include <algorithm>

#include "forcedistill/common/error.hpp"

namespace forcedistill {

PolicyHead::PolicyHead(ParameterStore& store, const ModelConfig& config, RngStream& rng)
    : width_(config.hidden_dim),
      heads_(config.heads),
      horizon_(config.horizon),
      action_dim_(config.action_dim) {
  config.validate();
  const std::size_t D = config.hidden_dim;
  const Real eps = config.layernorm_eps;
  action_in_ = Linear::create(store, "policy.action_in", action_dim_, D, rng);
  tau_in_ = Linear::create(store, "policy.tau_in", D, D, rng);
  tau_out_ = Linear::create(store, "policy.tau_out", D, D, rng);
  positions_ = sinusoidal_encoding(horizon_, D);
  for (std::size_t i = 0; i < config.policy_layers; ++i) {
    const std::string n = "policy.layer" + std::to_string(i);
    PolicyLayer l;
    l.self_norm = LayerNorm::create(store, n + ".self_norm", D, eps);
    l.self_q = Linear::create(store, n + ".self.q", D, D, rng, true, false);
    l.self_k = Linear::create(store, n + ".self.k", D, D, rng, true, false);
    l.self_v = Linear::create(store, n + ".self.v", D, D, rng, true, false);
    l.self_o = Linear::create(store, n + ".self.o", D, D, rng, true, false);
    l.cross_norm = LayerNorm::create(store, n + ".cross_norm", D, eps);
    l.memory_norm = LayerNorm::create(store, n + ".memory_norm", D, eps);
    l.cross_q = Linear::create(store, n + ".cross.q", D, D, rng, true, false);
    l.cross_k = Linear::create(store, n + ".cross.k", D, D, rng, true, false);
    l.cross_v = Linear::create(store, n + ".cross.v", D, D, rng, true, false);
    l.cross_o = Linear::create(store, n + ".cross.o", D, D, rng, true, false);
    l.ffn_norm = LayerNorm::create(store, n + ".ffn_norm", D, eps);
    l.ffn = FeedForward::create(store, n + ".ffn", D, config.ffn_dim(), rng);
    layers_.push_back(std::move(l));
  }
  final_norm_ = LayerNorm::create(store, "policy.final_norm", D, eps);
  output_ = Linear::create(store, "policy.output", D, action_dim_, rng, true, true, Real(0.02));
}

ad::Var PolicyHead::predict_velocity(const ad::Var& noisy, std::span<const Real> taus, const ad::Var& features,
                                     std::size_t feature_rows) const {
  const std::size_t batch = taus.size();
  if (batch == 0) throw DimensionError("predict_velocity: empty batch");
  if (noisy.rows() != batch * horizon_ || noisy.cols() != action_dim_) {
    throw DimensionError("predict_velocity: chunk " + shape_string(noisy.shape()) + " vs " +
                         std::to_string(batch) + " samples of " + std::to_string(horizon_) + "x" +
                         std::to_string(action_dim_));
  }
  if (feature_rows == 0 || features.rows() != batch * feature_rows || features.cols() != width_)
    throw DimensionError("predict_velocity: features " + shape_string(features.shape()) + " inconsistent with batch");

  ad::Var tau_emb = tau_out_(ad::gelu(tau_in_(ad::Var::constant(scalar_encoding(taus, width_)))));
  ad::Var x = ad::add(action_in_(noisy), ad::Var::constant([&] {
                        Tensor pos({batch * horizon_, width_});
                        for (std::size_t b = 0; b < batch; ++b)
                          std::copy(positions_.storage().begin(), positions_.storage().end(),
                                    pos.storage().begin() + b * horizon_ * width_);
                        return pos;
                      }()));
  x = ad::add(x, ad::repeat_rows(tau_emb, horizon_));

  ad::AttentionOptions self_opt;
  self_opt.batch = batch;
  self_opt.query_rows = horizon_;
  self_opt.key_rows = horizon_;
  self_opt.heads = heads_;
  ad::AttentionOptions cross_opt = self_opt;
  cross_opt.key_rows = feature_rows;

  for (const auto& l : layers_) {
    ad::Var h = l.self_norm(x);
    x = ad::add(x, l.self_o(ad::attention(l.self_q(h), l.self_k(h), l.self_v(h), self_opt)));
    h = l.cross_norm(x);
    ad::Var mem = l.memory_norm(features);
    x = ad::add(x, l.cross_o(ad::attention(l.cross_q(h), l.cross_k(mem), l.cross_v(mem), cross_opt)));
    x = ad::add(x, l.ffn(l.ffn_norm(x)));
  }
  return output_(final_norm_(x));
}

Tensor PolicyHead::sample_actions(const ad::Var& features, std::size_t feature_rows, int steps, RngStream& rng,
                                  const Standardizer& action_norm) const {
  if (features.rows() != feature_rows) throw DimensionError("sample_actions: expects the features of one sample");
  ad::NoGradGuard no_grad;
  Tensor noise = rng.normal_tensor({horizon_, action_dim_});
  Tensor chunk = integrate_flow(std::move(noise), steps, [&](const Tensor& a, Real tau) {
    const Real taus[1] = {tau};
    return predict_velocity(ad::Var::constant(a), taus, features, feature_rows).value();
  });
  return action_norm.denormalize(chunk);
}

}  // namespace forcedistill
