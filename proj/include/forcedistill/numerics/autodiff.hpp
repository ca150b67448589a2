// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "forcedistill/numerics/tensor.hpp"

// Reverse-mode differentiation over a dynamically recorded graph. Each op
// returns a Var whose node keeps its inputs alive until the Var is dropped.
namespace forcedistill::ad {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();  // zero-allocates on first use
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var leaf(Tensor value, bool requires_grad);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Real item() const;
  const std::shared_ptr<Node>& node() const { return node_; }

  // Seeds d(this)/d(this) = 1 and propagates. Requires a single-element value.
  void backward() const;

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real factor);
// x[m x n] + row[1 x n] broadcast over rows.
Var add_row(const Var& x, const Var& row);
Var layernorm(const Var& x, const Var& gain, const Var& bias, Real eps);
Var gelu(const Var& x);
// Softmax over the last axis, row by row, with max subtraction.
Var softmax(const Var& x);
Var sum(const Var& x);
// Sum of squared differences; a scalar of shape {1}.
Var squared_l2(const Var& a, const Var& b);

Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& x, std::size_t begin, std::size_t count);
// [r x n] -> [times*r x n], whole block repeated.
Var tile_rows(const Var& x, std::size_t times);
// [r x n] -> [r*times x n], each row repeated in place.
Var repeat_rows(const Var& x, std::size_t times);
Var gather_rows(const Var& table, std::vector<std::size_t> indices);

/// One modality block of a batched token tensor: `tokens` holds
/// batch * rows_per_sample rows, sample-major.
struct Block {
  Var tokens;
  std::size_t rows_per_sample;
};

// Per-sample concatenation: output sample b is [block0_b; block1_b; ...].
Var interleave(std::span<const Block> blocks, std::size_t batch);
// Rows [begin, begin+count) of every sample.
Var select_rows(const Var& x, std::size_t batch, std::size_t rows_per_sample,
                std::size_t begin, std::size_t count);

struct AttentionOptions {
  std::size_t batch = 1;
  std::size_t query_rows = 1;  // per sample
  std::size_t key_rows = 1;    // per sample
  std::size_t heads = 1;
  // query_rows x key_rows, 1 = allowed. Shared across the batch. Null = dense.
  const std::vector<std::uint8_t>* mask = nullptr;
  // If set, receives weights laid out [batch][head][query][key].
  std::vector<Real>* weights_out = nullptr;
};

// Scaled dot-product attention with heads split along columns. Masked pairs
// get exactly zero weight, which is what adding -inf to the logit yields.
Var attention(const Var& q, const Var& k, const Var& v, const AttentionOptions& options);

}  // namespace forcedistill::ad
