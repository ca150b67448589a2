// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/actionexpert/flow_matching.hpp"

#include <algorithm>

#include "forcedistill/common/error.hpp"

namespace forcedistill {

Real sample_tau(RngStream& rng, Real alpha, Real beta) {
  if (!(alpha > 0) || !(beta > 0)) throw ConfigError("tau distribution parameters must be positive");
  return std::clamp(rng.beta(alpha, beta), kTauMin, kTauMax);
}

FlowSample corrupt_actions(const Tensor& actions, const Tensor& epsilon, Real tau) {
  if (actions.shape() != epsilon.shape()) {
    throw DimensionError("corrupt_actions: chunk " + shape_string(actions.shape()) + " vs noise " +
                         shape_string(epsilon.shape()));
  }
  if (!(tau >= 0 && tau <= 1)) throw InputError("corrupt_actions: tau outside [0, 1]");
  FlowSample s{tau, epsilon, Tensor(actions.shape())};
  for (std::size_t i = 0; i < actions.size(); ++i) s.noisy[i] = tau * actions[i] + (Real(1) - tau) * epsilon[i];
  return s;
}

Tensor target_field(const Tensor& actions, const Tensor& epsilon) {
  if (actions.shape() != epsilon.shape()) {
    throw DimensionError("target_field: chunk " + shape_string(actions.shape()) + " vs noise " +
                         shape_string(epsilon.shape()));
  }
  Tensor u(actions.shape());
  for (std::size_t i = 0; i < actions.size(); ++i) u[i] = epsilon[i] - actions[i];
  return u;
}

ad::Var fm_loss(const ad::Var& predicted, const ad::Var& target) { return ad::squared_l2(predicted, target); }

Tensor integrate_flow(Tensor noise, int steps, const VelocityField& field) {
  if (steps < 1) throw ConfigError("integrate_flow: steps must be at least 1");
  const Real dt = Real(1) / Real(steps);
  Tensor a = std::move(noise);
  for (int k = 0; k < steps; ++k) {
    const Tensor v = field(a, Real(k) * dt);
    if (v.shape() != a.shape()) throw DimensionError("integrate_flow: field changed the chunk shape");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= dt * v[i];
    if (!a.all_finite()) throw DivergenceError("integrate_flow: non-finite chunk at Euler step " + std::to_string(k));
  }
  return a;
}

}  // namespace forcedistill
