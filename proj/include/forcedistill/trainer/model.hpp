// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forcedistill/actionexpert/policy_head.hpp"
#include "forcedistill/common/model_config.hpp"
#include "forcedistill/contactsim/demos.hpp"
#include "forcedistill/embedding/encoders.hpp"
#include "forcedistill/fdm/force_distillation.hpp"
#include "forcedistill/fusion/fusion.hpp"

namespace forcedistill {

// Force pathway wiring.
//   no_force         no force token at all
//   no_fdm           sensed wrench through a small MLP, fed to the backbone
//   fdm_force_token  sensed wrench token used as the FDM query
//   fdm_learnable    learnable-query prediction, distilled against the sensor
enum class Variant { no_force, no_fdm, fdm_force_token, fdm_learnable };

inline constexpr std::array<Variant, 4> kAllVariants{Variant::no_force, Variant::no_fdm, Variant::fdm_force_token,
                                                     Variant::fdm_learnable};

const char* variant_name(Variant v);
Variant parse_variant(std::string_view name);  // throws ConfigError

// True when the deployed policy consumes sensed force.
bool needs_force_sensor(Variant v);
// True when the loss has distillation and reconstruction terms.
bool has_distillation(Variant v);

// A batch of observations; every tensor is already normalized.
struct ModelInputs {
  Tensor images;                          // [B x C*H*W]
  std::vector<std::string> instructions;  // B entries, equal word counts
  Tensor states;                          // [B x d_s]
  std::optional<Tensor> force;            // [B x d_f]

  std::size_t batch() const { return states.rows(); }
};

struct Encoded {
  ad::Var features;  // backbone output, [B*N_tot x D]
  StreamLayout layout;
  std::size_t batch = 0;
  std::optional<ForceToken> predicted;
  std::optional<ForceToken> actual;
  std::vector<Real> fdm_weights;  // filled on request
};

struct LossTerms {
  ad::Var total;
  ad::Var flow;
  std::optional<ad::Var> distill;
  std::optional<ad::Var> recon;
};

struct TrainingBatch {
  ModelInputs inputs;
  Tensor actions;  // normalized chunk rows, [B*H_a x d_a]
  Tensor clean_force;  // normalized, [B x d_f]; diagnostics only
};

class PolicyModel {
 public:
  PolicyModel(const ModelConfig& config, Variant variant, std::uint64_t seed);
  PolicyModel(const PolicyModel&) = delete;
  PolicyModel& operator=(const PolicyModel&) = delete;

  const ModelConfig& config() const noexcept { return config_; }
  Variant variant() const noexcept { return variant_; }
  std::uint64_t seed() const noexcept { return seed_; }
  ParameterStore& store() noexcept { return store_; }
  const ParameterStore& store() const noexcept { return store_; }
  const FrozenStack& frozen() const noexcept { return *frozen_; }
  const ForceDistillationModule* fdm() const noexcept { return fdm_.get(); }
  const PolicyHead& policy() const noexcept { return *policy_; }
  const LanguageEncoder& language() const noexcept { return *language_; }

  StreamLayout layout(std::size_t language_tokens) const;

  // Variants that consume the sensor need `inputs.force`; fdm_learnable also
  // needs it in training mode for the distillation target. Sensor-free mode
  // raises ModeError when force is supplied or the variant depends on it.
  Encoded encode(const ModelInputs& inputs, RunMode mode, bool keep_fdm_weights = false) const;

  // Batch-averaged flow loss plus, for fdm_learnable, lambda * distill + mu * recon.
  LossTerms loss(const TrainingBatch& batch, std::span<const Real> taus, const Tensor& epsilon, Real lambda,
                 Real mu) const;

  // One normalized observation -> de-normalized action chunk [H_a x d_a].
  Tensor act(const sim::Observation& obs, const std::string& instruction, const sim::NormalizationStats& stats,
             int sampler_steps, RngStream& rng) const;

  std::string frozen_digest() const { return frozen_->digest(store_); }

 private:
  ModelConfig config_;
  Variant variant_;
  std::uint64_t seed_;
  ParameterStore store_;
  std::unique_ptr<VisionEncoder> vision_;
  std::unique_ptr<LanguageEncoder> language_;
  std::unique_ptr<StateEncoder> state_;
  std::unique_ptr<ForceDistillationModule> fdm_;
  std::optional<FeedForward> raw_force_;
  std::unique_ptr<FrozenStack> frozen_;
  std::unique_ptr<PolicyHead> policy_;
};

// Flat index over every (episode, step) of a dataset.
class SampleIndex {
 public:
  explicit SampleIndex(const sim::Dataset& dataset);
  std::size_t size() const noexcept { return refs_.size(); }
  std::pair<std::size_t, std::size_t> operator[](std::size_t i) const { return refs_[i]; }

 private:
  std::vector<std::pair<std::size_t, std::size_t>> refs_;
};

// Builds a normalized batch for the given (episode, step) pairs. Chunks that
// run past the episode end repeat the final action.
TrainingBatch make_batch(const sim::Dataset& dataset, std::span<const std::pair<std::size_t, std::size_t>> picks,
                         const sim::NormalizationStats& stats, std::size_t horizon, bool with_force);

// Normalized observation batch for a single step (used by act and probes).
ModelInputs observation_inputs(const sim::Observation& obs, const std::string& instruction,
                               const sim::NormalizationStats& stats, bool with_force);

}  // namespace forcedistill
