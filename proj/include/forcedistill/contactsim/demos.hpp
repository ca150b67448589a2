// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "forcedistill/contactsim/world.hpp"
#include "forcedistill/numerics/standardizer.hpp"

namespace forcedistill::sim {

struct Observation {
  Image image;
  StateVector state{};
  std::optional<Wrench> force;  // absent for sensor-free episodes
};

// Closed-loop episode. Counts every read of the force sensor so callers can
// prove that a sensor-free run never touched it.
class Episode {
 public:
  Episode(Task task, std::uint64_t seed, PhysicsConstants physics = {}, NoiseConfig noise = {},
          bool provide_force = true);

  Observation observe();
  void act(std::span<const Real> action);

  bool success() const { return evaluate_success(world_); }
  bool done() const { return success() || world_.steps >= physics_.episode_cap; }
  int steps() const { return world_.steps; }
  int force_reads() const { return force_reads_; }
  const WorldState& world() const { return world_; }
  const PhysicsConstants& physics() const { return physics_; }
  const ContactForce& contact() const { return contact_; }
  const SensedWrench& last_reading() const { return reading_; }

 private:
  WorldState world_;
  PhysicsConstants physics_;
  NoiseConfig noise_;
  bool provide_force_;
  SensorState sensor_;
  RngStream sensor_rng_;
  ContactForce contact_;
  SensedWrench reading_;
  int force_reads_ = 0;
};

struct Demonstration {
  Task task = Task::wipe;
  std::uint64_t seed = 0;
  bool success = false;
  std::size_t length = 0;
  std::vector<std::uint8_t> images;  // length x 3 x 32 x 32, pixel value times 255
  std::vector<Real> states;          // length x 5
  std::vector<Real> sensed;          // length x 3
  std::vector<Real> clean;           // length x 3
  std::vector<Real> bias;            // length x 3
  std::vector<Real> actions;         // length x 3

  Image image(std::size_t t) const;
  std::span<const Real> state(std::size_t t) const { return {states.data() + t * kStateDim, kStateDim}; }
  std::span<const Real> sensed_at(std::size_t t) const { return {sensed.data() + t * kForceDim, kForceDim}; }
  std::span<const Real> clean_at(std::size_t t) const { return {clean.data() + t * kForceDim, kForceDim}; }
  std::span<const Real> action(std::size_t t) const { return {actions.data() + t * kActionDim, kActionDim}; }

  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

// Expert rollout on a fresh world; the record holds the observation before
// each action.
Demonstration record_expert(Task task, std::uint64_t episode_seed, const PhysicsConstants& physics = {},
                            const NoiseConfig& noise = {});

// `count` successful episodes; failed rollouts are dropped and resampled.
// Throws GenerationError when 10 x count attempts are not enough.
std::vector<Demonstration> generate_demos(Task task, std::size_t count, std::uint64_t seed,
                                          const PhysicsConstants& physics = {}, const NoiseConfig& noise = {});

struct NormalizationStats {
  Standardizer state;
  Standardizer force;
  Standardizer action;
  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

struct Dataset {
  std::uint64_t seed = 0;
  PhysicsConstants physics;
  NoiseConfig noise;
  std::vector<Demonstration> episodes;

  std::size_t count(Task task) const;
  std::size_t total_steps() const;
};

inline constexpr int kDatasetFormatVersion = 1;

Dataset generate_dataset(std::span<const Task> tasks, std::size_t per_task, std::uint64_t seed,
                         const PhysicsConstants& physics = {}, const NoiseConfig& noise = {});

// Sensed force statistics; the same ones apply to clean force targets.
NormalizationStats compute_stats(const Dataset& dataset);

// Shapes, bounds, finiteness, success flags. Throws InvariantError.
void audit(const Dataset& dataset);

// Layout: <dir>/manifest.json plus <dir>/episode_NNNN/{images,states,sensed_wrench,
// clean_wrench,bias,actions}.npy. Deterministic bytes for a given dataset.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);  // throws IoError
NormalizationStats load_stats(const std::filesystem::path& dir);

}  // namespace forcedistill::sim
