// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/contactsim/demos.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "forcedistill/common/error.hpp"
#include "forcedistill/common/npy.hpp"
#include "json.hpp"

namespace forcedistill::sim {

namespace fs = std::filesystem;
using nlohmann::json;

Episode::Episode(Task task, std::uint64_t seed, PhysicsConstants physics, NoiseConfig noise, bool provide_force)
    : world_(make_world(task, seed)),
      physics_(physics),
      noise_(noise),
      provide_force_(provide_force),
      sensor_rng_(RngStream(seed).split(0x5e45)),
      contact_(contact_force(world_, physics_)) {}

Observation Episode::observe() {
  Observation obs{render(world_), world_.state_vector(), std::nullopt};
  if (provide_force_) {
    reading_ = sense_force(contact_.clean, sensor_, noise_, sensor_rng_);
    ++force_reads_;
    obs.force = reading_.sensed;
  }
  return obs;
}

void Episode::act(std::span<const Real> action) {
  StepResult r = step(world_, action, physics_);
  world_ = std::move(r.world);
  contact_ = r.force;
}

Image Demonstration::image(std::size_t t) const {
  constexpr std::size_t n = kImageChannels * kImageSize * kImageSize;
  Image img{kImageChannels, kImageSize, kImageSize, std::vector<Real>(n)};
  for (std::size_t i = 0; i < n; ++i) img.pixels[i] = Real(images[t * n + i]) / Real(255);
  return img;
}

Demonstration record_expert(Task task, std::uint64_t episode_seed, const PhysicsConstants& physics,
                            const NoiseConfig& noise) {
  Episode ep(task, episode_seed, physics, noise, true);
  Demonstration d;
  d.task = task;
  d.seed = episode_seed;
  while (!ep.done()) {
    const Observation obs = ep.observe();
    for (Real v : obs.image.pixels) d.images.push_back(static_cast<std::uint8_t>(std::lround(v * Real(255))));
    d.states.insert(d.states.end(), obs.state.begin(), obs.state.end());
    const SensedWrench& r = ep.last_reading();
    d.sensed.insert(d.sensed.end(), r.sensed.begin(), r.sensed.end());
    d.bias.insert(d.bias.end(), r.bias.begin(), r.bias.end());
    d.clean.insert(d.clean.end(), ep.contact().clean.begin(), ep.contact().clean.end());
    const Action a = expert_action(ep.world(), physics);
    d.actions.insert(d.actions.end(), a.begin(), a.end());
    ep.act(a);
    ++d.length;
  }
  d.success = ep.success();
  return d;
}

std::vector<Demonstration> generate_demos(Task task, std::size_t count, std::uint64_t seed,
                                          const PhysicsConstants& physics, const NoiseConfig& noise) {
  if (count == 0) throw InputError("generate_demos: count must be at least 1");
  std::vector<Demonstration> out;
  const std::uint64_t task_key = hash_combine(seed, static_cast<std::uint64_t>(task) + 1);
  const std::size_t budget = 10 * count;
  for (std::size_t attempt = 0; attempt < budget && out.size() < count; ++attempt) {
    Demonstration d = record_expert(task, hash_combine(task_key, attempt), physics, noise);
    if (d.success) out.push_back(std::move(d));
  }
  if (out.size() < count)
    throw GenerationError(std::string("expert reached only ") + std::to_string(out.size()) + " of " +
                          std::to_string(count) + " successes on " + task_name(task) + " in " +
                          std::to_string(budget) + " attempts");
  return out;
}

std::size_t Dataset::count(Task task) const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.task == task;
  return n;
}

std::size_t Dataset::total_steps() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.length;
  return n;
}

Dataset generate_dataset(std::span<const Task> tasks, std::size_t per_task, std::uint64_t seed,
                         const PhysicsConstants& physics, const NoiseConfig& noise) {
  Dataset ds{seed, physics, noise, {}};
  for (Task t : tasks) {
    auto demos = generate_demos(t, per_task, seed, physics, noise);
    for (auto& d : demos) ds.episodes.push_back(std::move(d));
  }
  return ds;
}

namespace {

Tensor stack(const Dataset& ds, std::vector<Real> Demonstration::*field, std::size_t dim) {
  std::vector<Real> all;
  for (const auto& e : ds.episodes) all.insert(all.end(), (e.*field).begin(), (e.*field).end());
  if (all.empty()) throw InputError("dataset has no steps");
  const std::size_t rows = all.size() / dim;
  return Tensor({rows, dim}, std::move(all));
}

json physics_json(const PhysicsConstants& p) {
  return {{"dt", p.dt},
          {"stiffness", p.stiffness},
          {"damping", p.damping},
          {"mass", p.mass},
          {"actuator_gain", p.actuator_gain},
          {"viscous_friction", p.viscous_friction},
          {"surface_friction", p.surface_friction},
          {"friction_velocity", p.friction_velocity},
          {"tool_lever", p.tool_lever},
          {"gripper_rate", p.gripper_rate},
          {"workspace_margin", p.workspace_margin},
          {"episode_cap", p.episode_cap}};
}

PhysicsConstants physics_from(const json& j) {
  PhysicsConstants p;
  p.dt = j.at("dt").get<Real>();
  p.stiffness = j.at("stiffness").get<Real>();
  p.damping = j.at("damping").get<Real>();
  p.mass = j.at("mass").get<Real>();
  p.actuator_gain = j.at("actuator_gain").get<Real>();
  p.viscous_friction = j.at("viscous_friction").get<Real>();
  p.surface_friction = j.at("surface_friction").get<Real>();
  p.friction_velocity = j.at("friction_velocity").get<Real>();
  p.tool_lever = j.at("tool_lever").get<Real>();
  p.gripper_rate = j.at("gripper_rate").get<Real>();
  p.workspace_margin = j.at("workspace_margin").get<Real>();
  p.episode_cap = j.at("episode_cap").get<int>();
  return p;
}

json standardizer_json(const Standardizer& s) { return {{"mean", s.mean()}, {"std", s.stddev()}}; }

Standardizer standardizer_from(const json& j) {
  return Standardizer(j.at("mean").get<std::vector<Real>>(), j.at("std").get<std::vector<Real>>());
}

std::string episode_dir(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "episode_%04zu", i);
  return buf;
}

std::vector<double> widen(const std::vector<Real>& v) { return {v.begin(), v.end()}; }

std::vector<Real> narrow(const std::vector<double>& v) { return {v.begin(), v.end()}; }

void check_array(const fs::path& path, const std::vector<std::size_t>& got, const std::vector<std::size_t>& want) {
  if (got != want) throw IoError(path.string() + ": unexpected array shape");
}

json read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("missing dataset manifest " + path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (m.value("format", "") != "forcedistill-demos" || m.value("version", 0) != kDatasetFormatVersion)
    throw IoError("unsupported dataset format in " + path.string());
  return m;
}

}  // namespace

NormalizationStats compute_stats(const Dataset& ds) {
  return {Standardizer::fit(stack(ds, &Demonstration::states, kStateDim)),
          Standardizer::fit(stack(ds, &Demonstration::sensed, kForceDim)),
          Standardizer::fit(stack(ds, &Demonstration::actions, kActionDim))};
}

void audit(const Dataset& ds) {
  constexpr std::size_t pixels = kImageChannels * kImageSize * kImageSize;
  const PhysicsConstants& p = ds.physics;
  for (std::size_t i = 0; i < ds.episodes.size(); ++i) {
    const Demonstration& d = ds.episodes[i];
    const std::string where = "episode " + std::to_string(i) + ": ";
    if (d.length == 0) throw InvariantError(where + "empty episode");
    if (!d.success) throw InvariantError(where + "unsuccessful demonstration");
    if (d.length > static_cast<std::size_t>(p.episode_cap)) throw InvariantError(where + "exceeds episode cap");
    if (d.images.size() != d.length * pixels || d.states.size() != d.length * kStateDim ||
        d.sensed.size() != d.length * kForceDim || d.clean.size() != d.length * kForceDim ||
        d.bias.size() != d.length * kForceDim || d.actions.size() != d.length * kActionDim)
      throw InvariantError(where + "record arrays disagree with episode length");
    for (const auto* v : {&d.states, &d.sensed, &d.clean, &d.bias, &d.actions})
      for (Real x : *v)
        if (!std::isfinite(x)) throw InvariantError(where + "non-finite value");
    for (Real a : d.actions)
      if (a < Real(-1) || a > Real(1)) throw InvariantError(where + "action outside [-1, 1]");
    for (std::size_t t = 0; t < d.length; ++t) {
      const auto s = d.state(t);
      if (s[0] < 0 || s[0] > 1 || s[1] < 0 || s[1] > 1) throw InvariantError(where + "position outside workspace");
      if (s[4] < 0 || s[4] > 1) throw InvariantError(where + "grip outside [0, 1]");
    }
  }
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const NormalizationStats stats = compute_stats(ds);
  json episodes = json::array();
  for (std::size_t i = 0; i < ds.episodes.size(); ++i) {
    const Demonstration& d = ds.episodes[i];
    const fs::path sub = dir / episode_dir(i);
    fs::create_directories(sub, ec);
    if (ec) throw IoError("cannot create " + sub.string() + ": " + ec.message());
    const std::size_t T = d.length;
    npy::write(sub / "images.npy", {T, kImageChannels, kImageSize, kImageSize}, d.images);
    npy::write(sub / "states.npy", {T, kStateDim}, widen(d.states));
    npy::write(sub / "sensed_wrench.npy", {T, kForceDim}, widen(d.sensed));
    npy::write(sub / "clean_wrench.npy", {T, kForceDim}, widen(d.clean));
    npy::write(sub / "bias.npy", {T, kForceDim}, widen(d.bias));
    npy::write(sub / "actions.npy", {T, kActionDim}, widen(d.actions));
    episodes.push_back({{"dir", episode_dir(i)},
                        {"task", task_name(d.task)},
                        {"seed", d.seed},
                        {"length", d.length},
                        {"success", d.success}});
  }
  json counts = json::object();
  for (Task t : kAllTasks)
    if (ds.count(t)) counts[task_name(t)] = ds.count(t);
  const json manifest = {
      {"format", "forcedistill-demos"},
      {"version", kDatasetFormatVersion},
      {"seed", ds.seed},
      {"counts", counts},
      {"total_steps", ds.total_steps()},
      {"physics", physics_json(ds.physics)},
      {"noise",
       {{"white_std", ds.noise.white_std}, {"drift_std", ds.noise.drift_std}, {"torque_scale", ds.noise.torque_scale}}},
      {"normalization",
       {{"state", standardizer_json(stats.state)},
        {"force", standardizer_json(stats.force)},
        {"action", standardizer_json(stats.action)}}},
      {"episodes", episodes}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

Dataset load_dataset(const fs::path& dir) {
  const json m = read_manifest(dir);
  Dataset ds;
  try {
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.physics = physics_from(m.at("physics"));
    const json& n = m.at("noise");
    ds.noise = {n.at("white_std").get<Real>(), n.at("drift_std").get<Real>(), n.at("torque_scale").get<Real>()};
    for (const json& e : m.at("episodes")) {
      Demonstration d;
      d.task = parse_task(e.at("task").get<std::string>());
      d.seed = e.at("seed").get<std::uint64_t>();
      d.length = e.at("length").get<std::size_t>();
      d.success = e.at("success").get<bool>();
      const fs::path sub = dir / e.at("dir").get<std::string>();
      const std::size_t T = d.length;
      auto images = npy::read_u8(sub / "images.npy");
      check_array(sub / "images.npy", images.shape, {T, kImageChannels, kImageSize, kImageSize});
      d.images = std::move(images.data);
      auto load = [&](const char* name, std::size_t dim) {
        auto a = npy::read_f64(sub / name);
        check_array(sub / name, a.shape, {T, dim});
        return narrow(a.data);
      };
      d.states = load("states.npy", kStateDim);
      d.sensed = load("sensed_wrench.npy", kForceDim);
      d.clean = load("clean_wrench.npy", kForceDim);
      d.bias = load("bias.npy", kForceDim);
      d.actions = load("actions.npy", kActionDim);
      ds.episodes.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
  } catch (const InputError& e) {
    throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  return ds;
}

NormalizationStats load_stats(const fs::path& dir) {
  const json m = read_manifest(dir);
  try {
    const json& n = m.at("normalization");
    return {standardizer_from(n.at("state")), standardizer_from(n.at("force")), standardizer_from(n.at("action"))};
  } catch (const json::exception& e) {
    throw IoError("malformed normalization block in " + dir.string() + ": " + e.what());
  }
}

}  // namespace forcedistill::sim
