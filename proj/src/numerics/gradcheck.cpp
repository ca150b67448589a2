// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "forcedistill/common/error.hpp"

namespace forcedistill {

namespace {

Real evaluate(const std::function<ad::Var()>& loss) {
  ad::NoGradGuard guard;
  const Real value = loss().item();
  if (!std::isfinite(value)) throw EvaluationError("grad_check: loss is not finite");
  return value;
}

}  // namespace

GradCheckReport grad_check(const std::function<ad::Var()>& loss, const std::vector<ParameterPtr>& params,
                           const GradCheckOptions& options) {
  if (!(options.step > 0)) throw ConfigError("grad_check: step must be positive");

  for (const auto& p : params) p->zero_grad();
  {
    ad::Var out = loss();
    if (!std::isfinite(out.item())) throw EvaluationError("grad_check: loss is not finite");
    out.backward();
  }

  GradCheckReport report;
  for (const auto& p : params) {
    if (!p->trainable()) continue;
    const Tensor analytic = p->has_grad() ? p->grad() : Tensor::zeros_like(p->value());
    for (std::size_t i = 0; i < p->value().size(); ++i) {
      Real& x = p->value()[i];
      const Real saved = x;
      x = saved + options.step;
      const Real up = evaluate(loss);
      x = saved - options.step;
      const Real down = evaluate(loss);
      x = saved;
      const Real numeric = (up - down) / (Real(2) * options.step);
      const Real denom = std::max({std::abs(analytic[i]), std::abs(numeric), options.floor});
      const Real rel = std::abs(analytic[i] - numeric) / denom;
      ++report.scalars_checked;
      if (report.worst_parameter.empty() || rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = p->name();
        report.worst_index = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace forcedistill
