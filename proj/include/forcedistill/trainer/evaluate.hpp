// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "forcedistill/contactsim/demos.hpp"
#include "forcedistill/trainer/trainer.hpp"

namespace forcedistill {

struct Interval {
  Real low = 0;
  Real high = 0;
};

// Wilson score interval; z = 1.96 gives 95%.
Interval wilson_interval(std::size_t successes, std::size_t trials, Real z = Real(1.959963984540054));

struct EpisodeLog {
  std::uint64_t seed = 0;
  bool success = false;
  int steps = 0;
  int force_reads = 0;
  friend bool operator==(const EpisodeLog&, const EpisodeLog&) = default;
};

struct EvalResult {
  sim::Task task = sim::Task::wipe;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  Real rate = 0;
  Interval ci;
  std::vector<EpisodeLog> logs;

  int force_reads() const;
  std::string summary_json() const;
};

std::uint64_t eval_episode_seed(std::uint64_t seed, sim::Task task, std::size_t episode);

// Closed loop: sample a chunk, execute all of it, re-plan. Sensor-free
// variants run episodes that never produce a force reading; a nonzero read
// count raises EvaluationError.
EvalResult evaluate(const PolicyModel& model, const sim::NormalizationStats& stats, sim::Task task,
                    std::size_t episodes, std::uint64_t seed, int sampler_steps,
                    const sim::PhysicsConstants& physics = {}, const sim::NoiseConfig& noise = {});

// Uniform random actions on the same episode seeds.
EvalResult evaluate_random(sim::Task task, std::size_t episodes, std::uint64_t seed,
                           const sim::PhysicsConstants& physics = {});

// Gaussian random actions with the demonstration action mean and std, the
// distribution an untrained flow head produces.
EvalResult evaluate_random(sim::Task task, std::size_t episodes, std::uint64_t seed,
                           const sim::NormalizationStats& stats, const sim::PhysicsConstants& physics = {});

struct AblationCell {
  Variant variant = Variant::fdm_learnable;
  std::uint64_t seed = 0;
  std::array<Real, 3> rates{};  // indexed by task
  Real mean = 0;
  double train_seconds = 0;
  friend bool operator==(const AblationCell&, const AblationCell&) = default;
};

struct AblationTable {
  std::vector<AblationCell> cells;
  std::size_t episodes = 0;

  Real mean(Variant v) const;
  Real task_mean(Variant v, sim::Task task) const;
  std::string to_string() const;
};

struct AblationOptions {
  std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t episodes = 100;
  std::uint64_t eval_seed = 1000;
  std::function<void(const AblationCell&)> on_cell;
};

// Same data, budget and seeds for every variant.
AblationTable run_ablation(const sim::Dataset& dataset, const TrainConfig& base, const AblationOptions& options);

struct ProbeResult {
  std::vector<Real> r2;  // per target column
  Real mean_r2 = 0;
};

// Least-squares linear map (with intercept) fitted on train rows, scored by
// R^2 on test rows.
ProbeResult linear_probe(const Tensor& train_x, const Tensor& train_y, const Tensor& test_x, const Tensor& test_y,
                         Real ridge = Real(1e-8));

// Predicted force tokens f_pF for every step of the given episodes, computed
// without any force input. Rows follow (episode, step) order.
Tensor predicted_force_tokens(const PolicyModel& model, const sim::Dataset& dataset,
                              const sim::NormalizationStats& stats, std::span<const std::size_t> episodes);

// Clean wrench rows matching predicted_force_tokens.
Tensor clean_wrenches(const sim::Dataset& dataset, std::span<const std::size_t> episodes);

// Training-set average of the batch-normalized distillation loss.
Real mean_distill_loss(const PolicyModel& model, const sim::Dataset& dataset, const sim::NormalizationStats& stats,
                       std::size_t batch_size = 64);

}  // namespace forcedistill
