// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/numerics/parameter.hpp"

#include "forcedistill/common/error.hpp"

namespace forcedistill {

Parameter::Parameter(std::string name, Tensor value, bool trainable)
    : name_(std::move(name)), node_(std::make_shared<ad::Node>()), trainable_(trainable) {
  node_->value = std::move(value);
  node_->requires_grad = trainable;
}

void Parameter::set_trainable(bool trainable) {
  trainable_ = trainable;
  node_->requires_grad = trainable;
  if (!trainable) node_->grad = Tensor();
}

void Parameter::zero_grad() {
  if (!node_->grad.empty()) node_->grad.fill(Real(0));
}

ParameterPtr ParameterStore::add(const std::string& name, Tensor value, bool trainable) {
  if (params_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  auto p = std::make_shared<Parameter>(name, std::move(value), trainable);
  params_.emplace(name, p);
  return p;
}

ParameterPtr ParameterStore::normal(const std::string& name, Shape shape, Real stddev, RngStream& rng,
                                    bool trainable) {
  return add(name, rng.normal_tensor(std::move(shape), stddev), trainable);
}

ParameterPtr ParameterStore::constant(const std::string& name, Shape shape, Real fill, bool trainable) {
  return add(name, Tensor(std::move(shape), fill), trainable);
}

ParameterPtr ParameterStore::find(const std::string& name) const {
  auto it = params_.find(name);
  return it == params_.end() ? nullptr : it->second;
}

std::vector<ParameterPtr> ParameterStore::trainable() const {
  std::vector<ParameterPtr> out;
  for (const auto& [_, p] : params_)
    if (p->trainable()) out.push_back(p);
  return out;
}

std::vector<ParameterPtr> ParameterStore::with_prefix(const std::string& prefix) const {
  std::vector<ParameterPtr> out;
  for (const auto& [name, p] : params_)
    if (name.rfind(prefix, 0) == 0) out.push_back(p);
  return out;
}

std::size_t ParameterStore::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_)
    if (!trainable_only || p->trainable()) n += p->value().size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, p] : params_) p->zero_grad();
}

}  // namespace forcedistill
