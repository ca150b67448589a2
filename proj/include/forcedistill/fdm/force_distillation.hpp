// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "forcedistill/embedding/encoders.hpp"

namespace forcedistill {

enum class ForceKind { predicted, actual };

/// One force embedding per sample: `embedding` is [batch x D].
struct ForceToken {
  ad::Var embedding;
  ForceKind kind = ForceKind::predicted;
  std::size_t batch = 0;
};

/// Per-sample context rows [query, vision..., state...], i.e.
/// rows_per_sample = 1 + N_v + N_s.
struct FdmContext {
  ad::Var rows;
  std::size_t batch = 0;
  std::size_t rows_per_sample = 0;
  std::size_t vision_rows = 0;
  std::size_t state_rows = 0;
};

struct QueryAttentionResult {
  ad::Var heads;                // [batch x H*d_k], heads concatenated
  std::vector<Real> weights;    // [batch][head][context row]
  std::size_t heads_count = 0;
  std::size_t context_rows = 0;
};

enum class RunMode { training, sensor_free_inference };

/// Query-to-force attention block and the projection of measured wrenches
/// into the same embedding space.
class ForceDistillationModule {
 public:
  ForceDistillationModule(ParameterStore& store, const ModelConfig& config, RngStream& rng);

  const ParameterPtr& query() const noexcept { return query_; }
  const Linear& w_q() const noexcept { return w_q_; }
  const Linear& w_k() const noexcept { return w_k_; }
  const Linear& w_v() const noexcept { return w_v_; }
  const Linear& w_o() const noexcept { return w_o_; }
  const LayerNorm& norm() const noexcept { return norm_; }
  const FeedForward& ffn() const noexcept { return ffn_; }
  const Linear& actual_encoder() const noexcept { return actual_encoder_; }
  const Linear& force_decoder() const noexcept { return force_decoder_; }
  std::size_t heads() const noexcept { return heads_; }

  // `query_rows` is [batch x D]: the learnable query tiled over the batch, or
  // any other per-sample token used in its place.
  FdmContext build_context(const ad::Var& query_rows, const TokenBlock& vision, const TokenBlock& state) const;
  QueryAttentionResult attend(const ad::Var& query_rows, const FdmContext& context) const;
  // h = LN(concat(Z) W_O + q); token = h + FFN(h).
  ad::Var output_head(const QueryAttentionResult& attention, const ad::Var& query_rows) const;

  // Learnable-query prediction branch. Never touches any force input.
  ForceToken predict(const TokenBlock& vision, const TokenBlock& state,
                     std::vector<Real>* weights_out = nullptr) const;
  // Same block with an arbitrary per-sample query in place of p.
  ad::Var attend_with_query(const ad::Var& query_rows, const TokenBlock& vision, const TokenBlock& state) const;

  // Actual-force branch: [batch x d_f] wrench -> [batch x D]. Training only.
  ForceToken encode_actual(const Tensor& wrench, RunMode mode) const;
  // [batch x D] actual token -> [batch x d_f] reconstructed wrench.
  ad::Var decode(const ForceToken& actual) const;

 private:
  std::size_t width_;
  std::size_t heads_;
  std::size_t force_dim_;
  ParameterPtr query_;
  Linear w_q_, w_k_, w_v_, w_o_;
  LayerNorm norm_;
  FeedForward ffn_;
  Linear actual_encoder_;
  Linear force_decoder_;
};

// ||predicted - actual||^2 summed over every entry of the batch.
ad::Var distill_loss(const ForceToken& predicted, const ForceToken& actual);

}  // namespace forcedistill
