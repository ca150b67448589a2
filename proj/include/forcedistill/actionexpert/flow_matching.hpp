// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "forcedistill/numerics/autodiff.hpp"
#include "forcedistill/numerics/rng.hpp"

namespace forcedistill {

inline constexpr Real kTauMin = Real(1e-3);
inline constexpr Real kTauMax = Real(0.999);

/// A noised action chunk: noisy == tau * actions + (1 - tau) * epsilon.
struct FlowSample {
  Real tau = 0;
  Tensor epsilon;
  Tensor noisy;
};

// Beta(alpha, beta) draw clipped to [kTauMin, kTauMax].
Real sample_tau(RngStream& rng, Real alpha, Real beta);

// Interpolates between noise (tau = 0) and data (tau = 1). tau in [0, 1].
FlowSample corrupt_actions(const Tensor& actions, const Tensor& epsilon, Real tau);

// Regression target epsilon - actions; independent of tau. Note that the
// path velocity d(noisy)/d(tau) is its negative.
Tensor target_field(const Tensor& actions, const Tensor& epsilon);

// Squared error summed over every chunk entry.
ad::Var fm_loss(const ad::Var& predicted, const ad::Var& target);

using VelocityField = std::function<Tensor(const Tensor& actions, Real tau)>;

/// Forward Euler from tau = 0 to 1 in `steps` equal increments, stepping
/// against the predicted field: A <- A - dt * v(A, tau_k). Throws
/// DivergenceError naming the step if the state stops being finite.
Tensor integrate_flow(Tensor noise, int steps, const VelocityField& field);

}  // namespace forcedistill
