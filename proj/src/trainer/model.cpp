// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/trainer/model.hpp"

#include "forcedistill/actionexpert/flow_matching.hpp"
#include "forcedistill/common/error.hpp"

namespace forcedistill {

namespace {
constexpr std::uint64_t kBackboneSeed = 0xb4c4b0e5eedULL;
}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::no_force: return "no_force";
    case Variant::no_fdm: return "no_fdm";
    case Variant::fdm_force_token: return "fdm_force_token";
    case Variant::fdm_learnable: return "fdm_learnable";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (name == variant_name(v)) return v;
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected no_force, no_fdm, fdm_force_token or fdm_learnable)");
}

bool needs_force_sensor(Variant v) { return v == Variant::no_fdm || v == Variant::fdm_force_token; }

bool has_distillation(Variant v) { return v == Variant::fdm_learnable; }

PolicyModel::PolicyModel(const ModelConfig& config, Variant variant, std::uint64_t seed)
    : config_(config), variant_(variant), seed_(seed) {
  config_.validate();
  const RngStream root(seed);
  RngStream r_vision = root.split(1), r_language = root.split(2), r_state = root.split(3), r_force = root.split(4),
            r_policy = root.split(6);
  vision_ = std::make_unique<VisionEncoder>(store_, config_, r_vision);
  language_ = std::make_unique<LanguageEncoder>(store_, config_, r_language);
  state_ = std::make_unique<StateEncoder>(store_, config_, r_state);
  if (variant == Variant::fdm_force_token || variant == Variant::fdm_learnable)
    fdm_ = std::make_unique<ForceDistillationModule>(store_, config_, r_force);
  if (variant == Variant::no_fdm) {
    raw_force_ = FeedForward{
        Linear::create(store_, "force.raw_encoder.in", config_.force_dim, config_.hidden_dim, r_force),
        Linear::create(store_, "force.raw_encoder.out", config_.hidden_dim, config_.hidden_dim, r_force)};
  }
  // The backbone stand-in is shared by every variant and seed.
  RngStream frozen_rng(kBackboneSeed);
  frozen_ = std::make_unique<FrozenStack>(store_, config_, frozen_rng);
  policy_ = std::make_unique<PolicyHead>(store_, config_, r_policy);
}

StreamLayout PolicyModel::layout(std::size_t language_tokens) const {
  return {config_.vision_tokens(), language_tokens, 1, variant_ == Variant::no_force ? std::size_t(0) : std::size_t(1)};
}

Encoded PolicyModel::encode(const ModelInputs& inputs, RunMode mode, bool keep_fdm_weights) const {
  const std::size_t batch = inputs.batch();
  if (inputs.images.rows() != batch || inputs.instructions.size() != batch)
    throw DimensionError("model inputs disagree on batch size");
  if (mode == RunMode::sensor_free_inference) {
    if (needs_force_sensor(variant_))
      throw ModeError(std::string("variant ") + variant_name(variant_) + " cannot run without a force sensor");
    if (inputs.force) throw ModeError("force must be withheld in sensor-free inference");
  }
  const bool wants_force = needs_force_sensor(variant_) || (has_distillation(variant_) && mode == RunMode::training);
  if (wants_force && !inputs.force)
    throw ModeError(std::string("variant ") + variant_name(variant_) + " needs sensed force here");
  if (inputs.force && inputs.force->rows() != batch) throw DimensionError("force batch size mismatch");

  Encoded out;
  out.batch = batch;
  const TokenBlock vision = vision_->encode(inputs.images);
  const TokenBlock language = language_->encode(inputs.instructions);
  const TokenBlock state = state_->encode(inputs.states);
  std::vector<TokenBlock> blocks{vision, language, state};

  switch (variant_) {
    case Variant::no_force:
      break;
    case Variant::no_fdm:
      blocks.push_back({(*raw_force_)(ad::Var::constant(*inputs.force)), Modality::force, 1, batch});
      break;
    case Variant::fdm_force_token: {
      const ForceToken actual = fdm_->encode_actual(*inputs.force, RunMode::training);
      blocks.push_back({fdm_->attend_with_query(actual.embedding, vision, state), Modality::force, 1, batch});
      break;
    }
    case Variant::fdm_learnable: {
      ForceToken predicted = fdm_->predict(vision, state, keep_fdm_weights ? &out.fdm_weights : nullptr);
      blocks.push_back({predicted.embedding, Modality::force, 1, batch});
      out.predicted = std::move(predicted);
      if (mode == RunMode::training) out.actual = fdm_->encode_actual(*inputs.force, mode);
      break;
    }
  }
  const FusedSequence fused = concat_fused(blocks);
  out.layout = fused.layout;
  out.features = frozen_->forward(fused);
  return out;
}

LossTerms PolicyModel::loss(const TrainingBatch& batch, std::span<const Real> taus, const Tensor& epsilon,
                            Real lambda, Real mu) const {
  const std::size_t B = batch.inputs.batch();
  const std::size_t rows = config_.horizon;
  if (taus.size() != B) throw DimensionError("loss: one tau per sample expected");
  if (batch.actions.shape() != Shape{B * rows, config_.action_dim} || epsilon.shape() != batch.actions.shape())
    throw DimensionError("loss: action chunk or noise has the wrong shape");
  if (!(lambda >= 0) || !(mu >= 0)) throw ConfigError("loss weights must be non-negative");

  const Encoded e = encode(batch.inputs, RunMode::training);
  Tensor noisy(batch.actions.shape());
  const std::size_t per = rows * config_.action_dim;
  for (std::size_t b = 0; b < B; ++b) {
    const Real tau = taus[b];
    for (std::size_t i = b * per; i < (b + 1) * per; ++i)
      noisy[i] = tau * batch.actions[i] + (Real(1) - tau) * epsilon[i];
  }
  const Tensor target = target_field(batch.actions, epsilon);
  const Real inv = Real(1) / Real(B);
  const ad::Var velocity = policy_->predict_velocity(ad::Var::constant(std::move(noisy)), taus, e.features,
                                                     e.layout.total());
  LossTerms terms;
  terms.flow = ad::scale(fm_loss(velocity, ad::Var::constant(target)), inv);
  terms.total = terms.flow;
  if (has_distillation(variant_)) {
    terms.distill = ad::scale(distill_loss(*e.predicted, *e.actual), inv);
    terms.recon = ad::scale(ad::squared_l2(fdm_->decode(*e.actual), ad::Var::constant(*batch.inputs.force)), inv);
    terms.total = ad::add(ad::add(terms.flow, ad::scale(*terms.distill, lambda)), ad::scale(*terms.recon, mu));
  }
  return terms;
}

Tensor PolicyModel::act(const sim::Observation& obs, const std::string& instruction,
                        const sim::NormalizationStats& stats, int sampler_steps, RngStream& rng) const {
  const bool sensor = needs_force_sensor(variant_);
  const ModelInputs inputs = observation_inputs(obs, instruction, stats, sensor);
  ad::NoGradGuard no_grad;
  const Encoded e = encode(inputs, sensor ? RunMode::training : RunMode::sensor_free_inference);
  return policy_->sample_actions(e.features, e.layout.total(), sampler_steps, rng, stats.action);
}

SampleIndex::SampleIndex(const sim::Dataset& dataset) {
  for (std::size_t e = 0; e < dataset.episodes.size(); ++e)
    for (std::size_t t = 0; t < dataset.episodes[e].length; ++t) refs_.emplace_back(e, t);
  if (refs_.empty()) throw InputError("dataset has no steps");
}

TrainingBatch make_batch(const sim::Dataset& dataset, std::span<const std::pair<std::size_t, std::size_t>> picks,
                         const sim::NormalizationStats& stats, std::size_t horizon, bool with_force) {
  using namespace sim;
  constexpr std::size_t pixels = kImageChannels * kImageSize * kImageSize;
  const std::size_t B = picks.size();
  if (B == 0) throw InputError("make_batch: empty batch");
  TrainingBatch batch;
  batch.inputs.images = Tensor({B, pixels});
  batch.inputs.states = Tensor({B, kStateDim});
  if (with_force) batch.inputs.force = Tensor({B, kForceDim});
  batch.clean_force = Tensor({B, kForceDim});
  batch.actions = Tensor({B * horizon, kActionDim});
  for (std::size_t b = 0; b < B; ++b) {
    const auto [e, t] = picks[b];
    const Demonstration& d = dataset.episodes.at(e);
    if (t >= d.length) throw InputError("make_batch: step index past episode end");
    auto img = batch.inputs.images.row(b);
    for (std::size_t i = 0; i < pixels; ++i) img[i] = Real(d.images[t * pixels + i]) / Real(255);
    auto st = batch.inputs.states.row(b);
    std::copy(d.state(t).begin(), d.state(t).end(), st.begin());
    stats.state.normalize_in_place(st);
    if (with_force) {
      auto f = batch.inputs.force->row(b);
      std::copy(d.sensed_at(t).begin(), d.sensed_at(t).end(), f.begin());
      stats.force.normalize_in_place(f);
    }
    auto c = batch.clean_force.row(b);
    std::copy(d.clean_at(t).begin(), d.clean_at(t).end(), c.begin());
    stats.force.normalize_in_place(c);
    for (std::size_t h = 0; h < horizon; ++h) {
      const std::size_t src = std::min(t + h, d.length - 1);
      auto a = batch.actions.row(b * horizon + h);
      std::copy(d.action(src).begin(), d.action(src).end(), a.begin());
      stats.action.normalize_in_place(a);
    }
    batch.inputs.instructions.push_back(task_instruction(d.task));
  }
  return batch;
}

ModelInputs observation_inputs(const sim::Observation& obs, const std::string& instruction,
                               const sim::NormalizationStats& stats, bool with_force) {
  ModelInputs in;
  in.images = Tensor({1, obs.image.pixels.size()}, obs.image.pixels);
  in.states = Tensor({1, sim::kStateDim}, std::vector<Real>(obs.state.begin(), obs.state.end()));
  stats.state.normalize_in_place(in.states.row(0));
  in.instructions = {instruction};
  if (with_force) {
    if (!obs.force) throw ModeError("observation carries no force reading");
    in.force = Tensor({1, sim::kForceDim}, std::vector<Real>(obs.force->begin(), obs.force->end()));
    stats.force.normalize_in_place(in.force->row(0));
  }
  return in;
}

}  // namespace forcedistill
