// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forcedistill/embedding/encoders.hpp"
#include "forcedistill/numerics/rng.hpp"

namespace forcedistill::sim {

enum class Task { wipe, press, insert };

inline constexpr std::array<Task, 3> kAllTasks{Task::wipe, Task::press, Task::insert};

const char* task_name(Task task);
Task parse_task(std::string_view name);  // throws InputError
std::string task_instruction(Task task);

inline constexpr std::size_t kStateDim = 5;   // x, y, vx, vy, grip
inline constexpr std::size_t kForceDim = 3;   // F_x, F_y [N], torque [N m]
inline constexpr std::size_t kActionDim = 3;  // ax, ay, engage, each in [-1, 1]
inline constexpr std::size_t kImageSize = 32;
inline constexpr std::size_t kImageChannels = 3;

using Wrench = std::array<Real, kForceDim>;
using Action = std::array<Real, kActionDim>;
using StateVector = std::array<Real, kStateDim>;

struct PhysicsConstants {
  Real dt = Real(0.05);
  Real stiffness = Real(100);     // N/m
  Real damping = Real(5);         // N s/m
  Real mass = Real(1);            // kg
  Real actuator_gain = Real(3);   // N per unit action
  Real viscous_friction = Real(4);   // 1/s
  Real surface_friction = Real(0.3);
  Real friction_velocity = Real(0.02);  // m/s, smoothing of the sliding direction
  Real tool_lever = Real(0.05);   // m, contact point below the sensor
  Real gripper_rate = Real(10);   // 1/s
  Real workspace_margin = Real(0.02);
  int episode_cap = 200;
};

/// Fixture geometry. The randomized members are drawn per episode.
struct Fixture {
  // wipe: board surface spanning the workspace, marks on [mark_begin, mark_end]
  Real board_y = Real(0.2);
  Real mark_begin = Real(0.3);
  Real mark_end = Real(0.7);
  Real cell_width = Real(0.01);
  Real tool_half_width = Real(0.02);
  Real wipe_force = Real(1.0);  // N needed to erase
  // press: spring button standing on a table
  Real table_y = Real(0.2);
  Real button_x = Real(0.5);
  Real button_half_width = Real(0.04);
  Real button_top = Real(0.3);
  Real button_preload = Real(1.0);   // N
  Real button_stiffness = Real(20);  // N/m
  Real button_travel = Real(0.05);
  Real latch_depth = Real(0.03);
  // insert: slot in a floor
  Real floor_y = Real(0.3);
  Real socket_x = Real(0.5);
  Real socket_half_width = Real(0.02);
  Real socket_depth = Real(0.08);
  Real peg_radius = Real(0.012);
  Real insert_tolerance = Real(0.015);

  std::size_t mark_cells() const;
  friend bool operator==(const Fixture&, const Fixture&) = default;
};

struct WorldState {
  Task task = Task::wipe;
  Fixture fixture;
  Real x = Real(0.5), y = Real(0.7);
  Real vx = 0, vy = 0;
  Real grip = 0;
  std::vector<std::uint8_t> wiped;  // one flag per mark cell
  Real depression = 0;
  bool latched = false;
  int steps = 0;

  Real wiped_fraction() const;
  Real insertion_depth() const;
  bool inside_socket() const;
  StateVector state_vector() const;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

// Fresh episode: randomized start pose and fixture placement.
WorldState make_world(Task task, std::uint64_t episode_seed);

struct ContactForce {
  Wrench clean{};        // force on the tool, expressed at the sensor
  Real normal = 0;       // vertical contact force magnitude
  Real penetration = 0;  // of the vertical contact, m
  Real penetration_rate = 0;
  bool in_contact = false;
};

// Penalty-spring contact: F_n = k max(0, pen) + c max(0, d pen/dt).
ContactForce contact_force(const WorldState& world, const PhysicsConstants& physics);

struct StepResult {
  WorldState world;
  ContactForce force;
};

// Semi-implicit Euler step. Actions are clipped to [-1, 1] per dimension.
StepResult step(const WorldState& world, std::span<const Real> action, const PhysicsConstants& physics);

bool evaluate_success(const WorldState& world);

/// Sensor model: sensed = clean + white + bias, bias a random walk.
struct NoiseConfig {
  Real white_std = Real(0.2);    // N per step
  Real drift_std = Real(0.01);   // N per step
  Real torque_scale = Real(0.05);  // m; torque noise is the force noise times this lever
};

struct SensorState {
  Wrench bias{};
};

struct SensedWrench {
  Wrench sensed{};
  Wrench white{};
  Wrench bias{};
};

SensedWrench sense_force(const Wrench& clean, SensorState& sensor, const NoiseConfig& noise, RngStream& rng);

// C x 32 x 32 image with values on the 1/255 grid.
Image render(const WorldState& world);

// Scripted controller with privileged access to the world (fixtures, clean
// contact force). Output already clipped to the action bounds.
Action expert_action(const WorldState& world, const PhysicsConstants& physics);

}  // namespace forcedistill::sim
