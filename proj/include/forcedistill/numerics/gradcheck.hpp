// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "forcedistill/numerics/parameter.hpp"

namespace forcedistill {

struct GradCheckOptions {
  Real step = Real(1e-5);
  Real tolerance = Real(1e-4);
  // Denominator floor for the relative error, so gradients that are zero on
  // both sides compare as absolute errors instead of 0/0.
  Real floor = Real(1e-6);
};

struct GradCheckReport {
  bool passed = false;
  Real max_relative_error = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  Real worst_analytic = 0;
  Real worst_numeric = 0;
  std::size_t scalars_checked = 0;
};

/// Compares reverse-mode gradients of `loss` with central differences for
/// every scalar of every trainable parameter in `params`. `loss` must rebuild
/// the graph from the current parameter values on each call.
GradCheckReport grad_check(const std::function<ad::Var()>& loss,
                           const std::vector<ParameterPtr>& params,
                           const GradCheckOptions& options = {});

}  // namespace forcedistill
