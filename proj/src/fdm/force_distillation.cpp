// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/fdm/force_distillation.hpp"

#include <cmath>

#include "forcedistill/common/error.hpp"

namespace forcedistill {

ForceDistillationModule::ForceDistillationModule(ParameterStore& store, const ModelConfig& config, RngStream& rng)
    : width_(config.hidden_dim), heads_(config.heads), force_dim_(config.force_dim) {
  config.validate();
  const std::size_t D = config.hidden_dim;
  query_ = store.normal("fdm.query", {1, D}, config.query_init_std, rng);
  w_q_ = Linear::create(store, "fdm.attn.q", D, D, rng, true, false);
  w_k_ = Linear::create(store, "fdm.attn.k", D, D, rng, true, false);
  w_v_ = Linear::create(store, "fdm.attn.v", D, D, rng, true, false);
  w_o_ = Linear::create(store, "fdm.attn.o", D, D, rng, true, false);
  norm_ = LayerNorm::create(store, "fdm.norm", D, config.layernorm_eps);
  ffn_ = FeedForward::create(store, "fdm.ffn", D, config.ffn_dim(), rng);
  actual_encoder_ = Linear::create(store, "fdm.actual_encoder", config.force_dim, D, rng);
  force_decoder_ = Linear::create(store, "fdm.force_decoder", D, config.force_dim, rng);
}

FdmContext ForceDistillationModule::build_context(const ad::Var& query_rows, const TokenBlock& vision,
                                                  const TokenBlock& state) const {
  if (!vision.tokens.defined() || vision.count == 0) throw DimensionError("fdm context: empty vision block");
  if (!state.tokens.defined() || state.count == 0) throw DimensionError("fdm context: empty state block");
  if (vision.modality != Modality::vision || state.modality != Modality::state)
    throw ContractError("fdm context: expected vision and state blocks");
  const std::size_t batch = vision.batch;
  if (state.batch != batch || query_rows.rows() != batch)
    throw DimensionError("fdm context: batch sizes differ");
  if (query_rows.cols() != width_ || vision.width() != width_ || state.width() != width_) {
    throw DimensionError("fdm context: widths " + std::to_string(query_rows.cols()) + "/" +
                         std::to_string(vision.width()) + "/" + std::to_string(state.width()) + " vs D=" +
                         std::to_string(width_));
  }
  std::vector<ad::Block> blocks{{query_rows, 1}, {vision.tokens, vision.count}, {state.tokens, state.count}};
  return {ad::interleave(blocks, batch), batch, 1 + vision.count + state.count, vision.count, state.count};
}

QueryAttentionResult ForceDistillationModule::attend(const ad::Var& query_rows, const FdmContext& context) const {
  QueryAttentionResult result;
  ad::AttentionOptions opt;
  opt.batch = context.batch;
  opt.query_rows = 1;
  opt.key_rows = context.rows_per_sample;
  opt.heads = heads_;
  opt.weights_out = &result.weights;
  result.heads = ad::attention(w_q_(query_rows), w_k_(context.rows), w_v_(context.rows), opt);
  result.heads_count = heads_;
  result.context_rows = context.rows_per_sample;
  return result;
}

ad::Var ForceDistillationModule::output_head(const QueryAttentionResult& attention, const ad::Var& query_rows) const {
  ad::Var h = norm_(ad::add(w_o_(attention.heads), query_rows));
  return ad::add(h, ffn_(h));
}

ForceToken ForceDistillationModule::predict(const TokenBlock& vision, const TokenBlock& state,
                                            std::vector<Real>* weights_out) const {
  ad::Var q = ad::tile_rows(query_->var(), vision.batch);
  FdmContext ctx = build_context(q, vision, state);
  QueryAttentionResult att = attend(q, ctx);
  if (weights_out) *weights_out = att.weights;
  return {output_head(att, q), ForceKind::predicted, vision.batch};
}

ad::Var ForceDistillationModule::attend_with_query(const ad::Var& query_rows, const TokenBlock& vision,
                                                   const TokenBlock& state) const {
  FdmContext ctx = build_context(query_rows, vision, state);
  return output_head(attend(query_rows, ctx), query_rows);
}

ForceToken ForceDistillationModule::encode_actual(const Tensor& wrench, RunMode mode) const {
  if (mode == RunMode::sensor_free_inference)
    throw ModeError("actual-force branch is unavailable during sensor-free inference");
  if (wrench.cols() != force_dim_) {
    throw DimensionError("actual-force encoder expects length " + std::to_string(force_dim_) + ", got " +
                         std::to_string(wrench.cols()));
  }
  if (!wrench.all_finite()) throw InputError("actual-force encoder: non-finite wrench");
  return {actual_encoder_(ad::Var::constant(wrench)), ForceKind::actual, wrench.rows()};
}

ad::Var ForceDistillationModule::decode(const ForceToken& actual) const {
  if (actual.kind != ForceKind::actual) throw ContractError("force decoder only accepts actual-force tokens");
  return force_decoder_(actual.embedding);
}

ad::Var distill_loss(const ForceToken& predicted, const ForceToken& actual) {
  if (predicted.kind != ForceKind::predicted || actual.kind != ForceKind::actual)
    throw ContractError("distill_loss expects (predicted, actual) tokens");
  return ad::squared_l2(predicted.embedding, actual.embedding);
}

}  // namespace forcedistill
