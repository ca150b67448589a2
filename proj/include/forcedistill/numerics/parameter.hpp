// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "forcedistill/numerics/autodiff.hpp"
#include "forcedistill/numerics/rng.hpp"

namespace forcedistill {

/// A named leaf of the graph. Frozen parameters never require gradients, so
/// no gradient is ever accumulated for them and no optimizer step touches them.
class Parameter {
 public:
  Parameter(std::string name, Tensor value, bool trainable);

  const std::string& name() const noexcept { return name_; }
  bool trainable() const noexcept { return trainable_; }
  void set_trainable(bool trainable);

  ad::Var var() const { return ad::Var(node_); }
  Tensor& value() { return node_->value; }
  const Tensor& value() const { return node_->value; }
  Tensor& grad() { return node_->grad_buffer(); }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

 private:
  std::string name_;
  std::shared_ptr<ad::Node> node_;
  bool trainable_;
};

using ParameterPtr = std::shared_ptr<Parameter>;

/// Ordered registry of every parameter in a model, keyed by dotted name.
class ParameterStore {
 public:
  ParameterPtr add(const std::string& name, Tensor value, bool trainable);
  ParameterPtr normal(const std::string& name, Shape shape, Real stddev, RngStream& rng,
                      bool trainable = true);
  ParameterPtr constant(const std::string& name, Shape shape, Real fill, bool trainable = true);

  ParameterPtr find(const std::string& name) const;
  const std::map<std::string, ParameterPtr>& all() const noexcept { return params_; }
  std::vector<ParameterPtr> trainable() const;
  std::vector<ParameterPtr> with_prefix(const std::string& prefix) const;
  std::size_t scalar_count(bool trainable_only) const;
  void zero_grad();

 private:
  std::map<std::string, ParameterPtr> params_;
};

}  // namespace forcedistill
