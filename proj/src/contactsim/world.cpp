// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/contactsim/world.hpp"

#include <algorithm>
#include <cmath>

#include "forcedistill/common/error.hpp"

namespace forcedistill::sim {

const char* task_name(Task task) {
  switch (task) {
    case Task::wipe: return "wipe";
    case Task::press: return "press";
    case Task::insert: return "insert";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  for (Task t : kAllTasks)
    if (name == task_name(t)) return t;
  throw InputError("unknown task '" + std::string(name) + "' (expected wipe, press or insert)");
}

std::string task_instruction(Task task) {
  switch (task) {
    case Task::wipe: return "wipe the whiteboard";
    case Task::press: return "press the button";
    case Task::insert: return "insert the plug";
  }
  return {};
}

std::size_t Fixture::mark_cells() const {
  return static_cast<std::size_t>(std::ceil((mark_end - mark_begin) / cell_width - Real(1e-9)));
}

Real WorldState::wiped_fraction() const {
  if (wiped.empty()) return 0;
  const auto n = std::count(wiped.begin(), wiped.end(), std::uint8_t{1});
  return Real(n) / Real(wiped.size());
}

bool WorldState::inside_socket() const {
  return task == Task::insert && std::abs(x - fixture.socket_x) < fixture.socket_half_width;
}

Real WorldState::insertion_depth() const {
  if (!inside_socket()) return 0;
  return std::clamp(fixture.floor_y - y, Real(0), fixture.socket_depth);
}

StateVector WorldState::state_vector() const { return {x, y, vx, vy, grip}; }

WorldState make_world(Task task, std::uint64_t episode_seed) {
  RngStream rng(episode_seed);
  WorldState w;
  w.task = task;
  w.x = rng.uniform(Real(0.15), Real(0.85));
  w.y = rng.uniform(Real(0.6), Real(0.85));
  switch (task) {
    case Task::wipe:
      w.fixture.mark_begin = rng.uniform(Real(0.2), Real(0.35));
      w.fixture.mark_end = w.fixture.mark_begin + rng.uniform(Real(0.3), Real(0.45));
      w.wiped.assign(w.fixture.mark_cells(), 0);
      break;
    case Task::press:
      w.fixture.button_x = rng.uniform(Real(0.3), Real(0.7));
      break;
    case Task::insert:
      w.fixture.socket_x = rng.uniform(Real(0.3), Real(0.7));
      break;
  }
  return w;
}

namespace {

// Vertical contact against a horizontal surface at height `surface`.
void surface_contact(const WorldState& w, const PhysicsConstants& p, Real surface, ContactForce& f) {
  const Real pen = surface - w.y;
  if (pen <= 0) return;
  const Real rate = -w.vy;
  const Real normal = p.stiffness * pen + p.damping * std::max(Real(0), rate);
  const Real friction = -p.surface_friction * normal * std::tanh(w.vx / p.friction_velocity);
  f.in_contact = true;
  f.penetration = pen;
  f.penetration_rate = rate;
  f.normal = normal;
  f.clean[0] += friction;
  f.clean[1] += normal;
}

}  // namespace

ContactForce contact_force(const WorldState& w, const PhysicsConstants& p) {
  ContactForce f;
  const Fixture& fx = w.fixture;
  switch (w.task) {
    case Task::wipe:
      surface_contact(w, p, fx.board_y, f);
      break;
    case Task::press: {
      const bool on_button = std::abs(w.x - fx.button_x) <= fx.button_half_width;
      surface_contact(w, p, on_button ? fx.button_top - w.depression : fx.table_y, f);
      break;
    }
    case Task::insert: {
      if (!w.inside_socket()) {
        surface_contact(w, p, fx.floor_y, f);
        break;
      }
      surface_contact(w, p, fx.floor_y - fx.socket_depth, f);
      if (w.y < fx.floor_y) {
        const Real left = fx.peg_radius - (w.x - (fx.socket_x - fx.socket_half_width));
        const Real right = (w.x + fx.peg_radius) - (fx.socket_x + fx.socket_half_width);
        if (left > 0) f.clean[0] += p.stiffness * left + p.damping * std::max(Real(0), -w.vx);
        if (right > 0) f.clean[0] -= p.stiffness * right + p.damping * std::max(Real(0), w.vx);
      }
      break;
    }
  }
  f.clean[2] = p.tool_lever * f.clean[0];
  return f;
}

StepResult step(const WorldState& world, std::span<const Real> action, const PhysicsConstants& p) {
  if (action.size() != kActionDim)
    throw DimensionError("step: action has " + std::to_string(action.size()) + " entries, expected 3");
  Action a{};
  for (std::size_t i = 0; i < kActionDim; ++i) {
    if (!std::isfinite(action[i])) throw InputError("step: non-finite action");
    a[i] = std::clamp(action[i], Real(-1), Real(1));
  }
  const ContactForce before = contact_force(world, p);
  WorldState w = world;
  const Real ax = (p.actuator_gain * a[0] + before.clean[0]) / p.mass - p.viscous_friction * w.vx;
  const Real ay = (p.actuator_gain * a[1] + before.clean[1]) / p.mass - p.viscous_friction * w.vy;
  w.vx += p.dt * ax;
  w.vy += p.dt * ay;
  w.x += p.dt * w.vx;
  w.y += p.dt * w.vy;
  const Real lo = p.workspace_margin, hi = Real(1) - p.workspace_margin;
  if (w.x < lo || w.x > hi) {
    w.x = std::clamp(w.x, lo, hi);
    w.vx = 0;
  }
  if (w.y < lo || w.y > hi) {
    w.y = std::clamp(w.y, lo, hi);
    w.vy = 0;
  }
  const Real engage = (a[2] + Real(1)) / Real(2);
  w.grip = std::clamp(w.grip + p.dt * p.gripper_rate * (engage - w.grip), Real(0), Real(1));

  const Fixture& fx = w.fixture;
  if (w.task == Task::press) {
    Real settled = 0;
    if (std::abs(w.x - fx.button_x) <= fx.button_half_width && w.y < fx.button_top) {
      settled = (p.stiffness * (fx.button_top - w.y) - fx.button_preload) / (p.stiffness + fx.button_stiffness);
      settled = std::clamp(settled, Real(0), fx.button_travel);
    }
    w.depression = w.latched ? std::max(settled, fx.latch_depth) : settled;
    if (w.depression >= fx.latch_depth) w.latched = true;
  }

  ++w.steps;
  ContactForce after = contact_force(w, p);
  if (w.task == Task::wipe && after.in_contact && after.normal >= fx.wipe_force && w.grip >= Real(0.5)) {
    for (std::size_t i = 0; i < w.wiped.size(); ++i) {
      const Real center = fx.mark_begin + (Real(i) + Real(0.5)) * fx.cell_width;
      if (std::abs(center - w.x) <= fx.tool_half_width) w.wiped[i] = 1;
    }
  }
  return {std::move(w), after};
}

bool evaluate_success(const WorldState& w) {
  switch (w.task) {
    case Task::wipe: return w.wiped_fraction() >= Real(0.99);
    case Task::press: return w.latched && w.depression >= w.fixture.latch_depth;
    case Task::insert:
      return w.inside_socket() && w.insertion_depth() >= w.fixture.socket_depth - w.fixture.insert_tolerance;
  }
  return false;
}

SensedWrench sense_force(const Wrench& clean, SensorState& sensor, const NoiseConfig& noise, RngStream& rng) {
  const std::array<Real, kForceDim> scale{Real(1), Real(1), noise.torque_scale};
  SensedWrench out;
  for (std::size_t i = 0; i < kForceDim; ++i) {
    sensor.bias[i] += noise.drift_std * scale[i] * rng.normal();
    out.white[i] = noise.white_std * scale[i] * rng.normal();
    out.bias[i] = sensor.bias[i];
    out.sensed[i] = clean[i] + out.white[i] + out.bias[i];
  }
  return out;
}

namespace {

using Rgb = std::array<Real, kImageChannels>;

bool in_box(Real px, Real py, Real x0, Real x1, Real y0, Real y1) {
  return px >= x0 && px <= x1 && py >= y0 && py <= y1;
}

Rgb shade(const WorldState& w, Real px, Real py) {
  Rgb c{0, 0, 0};
  const Fixture& fx = w.fixture;
  switch (w.task) {
    case Task::wipe:
      if (py <= fx.board_y) c[0] = Real(0.6);
      if (py <= fx.board_y && py >= fx.board_y - Real(0.04) && px >= fx.mark_begin && px < fx.mark_end) {
        const auto cell = static_cast<std::size_t>((px - fx.mark_begin) / fx.cell_width);
        if (cell < w.wiped.size() && !w.wiped[cell]) c[1] = Real(1);
      }
      break;
    case Task::press:
      if (py <= fx.table_y) c[0] = Real(0.6);
      if (in_box(px, py, fx.button_x - fx.button_half_width, fx.button_x + fx.button_half_width, fx.table_y,
                 fx.button_top - w.depression))
        c[1] = w.latched ? Real(0.5) : Real(0.9);
      break;
    case Task::insert: {
      const bool slot = std::abs(px - fx.socket_x) < fx.socket_half_width && py > fx.floor_y - fx.socket_depth;
      if (py <= fx.floor_y && !slot) c[0] = Real(0.6);
      if (slot && py <= fx.floor_y) c[1] = Real(0.7);
      break;
    }
  }
  const Real dx = px - w.x, dy = py - w.y;
  if (dx * dx + dy * dy <= Real(0.03 * 0.03)) c[2] = Real(0.5) + Real(0.5) * w.grip;
  return c;
}

}  // namespace

Image render(const WorldState& w) {
  constexpr std::size_t S = kImageSize, sub = 4;
  Image img{kImageChannels, S, S, std::vector<Real>(kImageChannels * S * S, 0)};
  for (std::size_t r = 0; r < S; ++r) {
    for (std::size_t col = 0; col < S; ++col) {
      Rgb acc{0, 0, 0};
      for (std::size_t sy = 0; sy < sub; ++sy)
        for (std::size_t sx = 0; sx < sub; ++sx) {
          const Real px = (Real(col) + (Real(sx) + Real(0.5)) / Real(sub)) / Real(S);
          const Real py = Real(1) - (Real(r) + (Real(sy) + Real(0.5)) / Real(sub)) / Real(S);
          const Rgb c = shade(w, px, py);
          for (std::size_t ch = 0; ch < kImageChannels; ++ch) acc[ch] += c[ch];
        }
      for (std::size_t ch = 0; ch < kImageChannels; ++ch)
        img.at(ch, r, col) = std::round(acc[ch] / Real(sub * sub) * Real(255)) / Real(255);
    }
  }
  return img;
}

namespace {

Real clip(Real v) { return std::clamp(v, Real(-1), Real(1)); }

// Position PD in action units.
Real pd(Real target, Real pos, Real vel, Real kp = Real(2), Real kd = Real(0.4)) {
  return kp * (target - pos) - kd * vel;
}

// Tracks a velocity with feedforward against viscous friction plus `load` N.
Real track_velocity(Real desired, Real vel, const PhysicsConstants& p, Real load = 0, Real kv = Real(2)) {
  return (p.mass * p.viscous_friction * desired + load) / p.actuator_gain + kv * (desired - vel);
}

Action wipe_expert(const WorldState& w, const PhysicsConstants& p) {
  const Fixture& fx = w.fixture;
  std::size_t first = 0;
  while (first < w.wiped.size() && w.wiped[first]) ++first;
  if (first == w.wiped.size()) return {pd(w.x, w.x, w.vx), Real(0.5), Real(-1)};
  const Real cell = fx.mark_begin + (Real(first) + Real(0.5)) * fx.cell_width;
  const Real x_goal = cell - Real(0.025);
  const ContactForce f = contact_force(w, p);
  const bool touching = w.y <= fx.board_y + Real(0.003);

  if (touching && w.x >= x_goal - Real(0.03) && w.x <= cell + Real(0.015)) {
    constexpr Real target = Real(1.5), kf = Real(1);
    const Real ay = -(target + kf * (target - f.normal)) / p.actuator_gain - Real(0.5) * w.vy;
    const Real ax = track_velocity(Real(0.12), w.vx, p, p.surface_friction * f.normal);
    return {clip(ax), clip(ay), Real(1)};
  }
  if (std::abs(w.x - x_goal) < Real(0.015) && w.y < fx.board_y + Real(0.08)) {
    return {clip(pd(x_goal, w.x, w.vx)), clip(track_velocity(Real(-0.08), w.vy, p)), Real(1)};
  }
  return {clip(pd(x_goal, w.x, w.vx)), clip(pd(fx.board_y + Real(0.05), w.y, w.vy)), Real(-1)};
}

Action press_expert(const WorldState& w, const PhysicsConstants& p) {
  const Fixture& fx = w.fixture;
  const Real top = fx.button_top - w.depression;
  const bool above = std::abs(w.x - fx.button_x) < Real(0.012);
  if (above && w.y < top + Real(0.07)) {
    const ContactForce f = contact_force(w, p);
    const Real ay = f.in_contact ? Real(-0.85) : track_velocity(Real(-0.08), w.vy, p);
    return {clip(pd(fx.button_x, w.x, w.vx, Real(6))), clip(ay), Real(1)};
  }
  return {clip(pd(fx.button_x, w.x, w.vx)), clip(pd(fx.button_top + Real(0.05), w.y, w.vy)), Real(-1)};
}

Action insert_expert(const WorldState& w, const PhysicsConstants& p) {
  const Fixture& fx = w.fixture;
  const ContactForce f = contact_force(w, p);
  const bool aligned = std::abs(w.x - fx.socket_x) < Real(0.005);
  const bool blocked = f.in_contact && !w.inside_socket();
  const bool entering = w.inside_socket() && w.y < fx.floor_y;
  if ((aligned || entering) && !blocked && w.y < fx.floor_y + Real(0.08)) {
    Real ay = track_velocity(Real(-0.06), w.vy, p);
    if (f.clean[1] > Real(1.0)) ay = std::max(ay, Real(-1.0) / p.actuator_gain);
    return {clip(pd(fx.socket_x, w.x, w.vx, Real(6))), clip(ay), Real(1)};
  }
  return {clip(pd(fx.socket_x, w.x, w.vx)), clip(pd(fx.floor_y + Real(0.05), w.y, w.vy)), Real(1)};
}

}  // namespace

Action expert_action(const WorldState& world, const PhysicsConstants& physics) {
  switch (world.task) {
    case Task::wipe: return wipe_expert(world, physics);
    case Task::press: return press_expert(world, physics);
    case Task::insert: return insert_expert(world, physics);
  }
  return {};
}

}  // namespace forcedistill::sim
