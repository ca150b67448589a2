// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/trainer/evaluate.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "forcedistill/common/error.hpp"
#include "json.hpp"

namespace forcedistill {

Interval wilson_interval(std::size_t successes, std::size_t trials, Real z) {
  if (trials == 0) throw InputError("wilson_interval: no trials");
  if (successes > trials) throw InputError("wilson_interval: more successes than trials");
  const Real n = Real(trials);
  const Real p = Real(successes) / n;
  const Real z2 = z * z;
  const Real center = (p + z2 / (2 * n)) / (1 + z2 / n);
  const Real half = z / (1 + z2 / n) * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
  if (successes == 0) return {Real(0), std::min(Real(1), center + half)};
  if (successes == trials) return {std::max(Real(0), center - half), Real(1)};
  return {std::max(Real(0), center - half), std::min(Real(1), center + half)};
}

int EvalResult::force_reads() const {
  int n = 0;
  for (const auto& l : logs) n += l.force_reads;
  return n;
}

std::string EvalResult::summary_json() const {
  nlohmann::ordered_json j;
  j["task"] = sim::task_name(task);
  j["episodes"] = episodes;
  j["successes"] = successes;
  j["success_rate"] = rate;
  j["ci95"] = {ci.low, ci.high};
  j["force_reads"] = force_reads();
  return j.dump();
}

std::uint64_t eval_episode_seed(std::uint64_t seed, sim::Task task, std::size_t episode) {
  return hash_combine(hash_combine(hash_combine(seed, 0xe7a1), static_cast<std::uint64_t>(task)), episode);
}

namespace {

EvalResult finish(sim::Task task, std::vector<EpisodeLog> logs) {
  EvalResult r;
  r.task = task;
  r.episodes = logs.size();
  for (const auto& l : logs) r.successes += l.success;
  r.rate = Real(r.successes) / Real(r.episodes);
  r.ci = wilson_interval(r.successes, r.episodes);
  r.logs = std::move(logs);
  return r;
}

}  // namespace

EvalResult evaluate(const PolicyModel& model, const sim::NormalizationStats& stats, sim::Task task,
                    std::size_t episodes, std::uint64_t seed, int sampler_steps, const sim::PhysicsConstants& physics,
                    const sim::NoiseConfig& noise) {
  if (episodes == 0) throw InputError("evaluate: episodes must be at least 1");
  const bool sensor = needs_force_sensor(model.variant());
  const std::string instruction = sim::task_instruction(task);
  std::vector<EpisodeLog> logs;
  for (std::size_t i = 0; i < episodes; ++i) {
    const std::uint64_t ep_seed = eval_episode_seed(seed, task, i);
    sim::Episode ep(task, ep_seed, physics, noise, sensor);
    RngStream rng = RngStream(ep_seed).split(0xac7);
    while (!ep.done()) {
      const Tensor chunk = model.act(ep.observe(), instruction, stats, sampler_steps, rng);
      for (std::size_t h = 0; h < chunk.rows() && !ep.done(); ++h) ep.act(chunk.row(h));
    }
    logs.push_back({ep_seed, ep.success(), ep.steps(), ep.force_reads()});
    if (!sensor && ep.force_reads() != 0)
      throw EvaluationError("sensor-free evaluation read the force sensor");
  }
  return finish(task, std::move(logs));
}

EvalResult evaluate_random(sim::Task task, std::size_t episodes, std::uint64_t seed,
                           const sim::PhysicsConstants& physics) {
  if (episodes == 0) throw InputError("evaluate_random: episodes must be at least 1");
  std::vector<EpisodeLog> logs;
  for (std::size_t i = 0; i < episodes; ++i) {
    const std::uint64_t ep_seed = eval_episode_seed(seed, task, i);
    sim::Episode ep(task, ep_seed, physics, {}, false);
    RngStream rng = RngStream(ep_seed).split(0x4a4d);
    while (!ep.done()) {
      const sim::Action a{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      ep.act(a);
    }
    logs.push_back({ep_seed, ep.success(), ep.steps(), ep.force_reads()});
  }
  return finish(task, std::move(logs));
}

EvalResult evaluate_random(sim::Task task, std::size_t episodes, std::uint64_t seed,
                           const sim::NormalizationStats& stats, const sim::PhysicsConstants& physics) {
  if (episodes == 0) throw InputError("evaluate_random: episodes must be at least 1");
  if (stats.action.dim() != 3) throw DimensionError("evaluate_random: action statistics must have 3 dims");
  const auto& mean = stats.action.mean();
  const auto& sd = stats.action.stddev();
  std::vector<EpisodeLog> logs;
  for (std::size_t i = 0; i < episodes; ++i) {
    const std::uint64_t ep_seed = eval_episode_seed(seed, task, i);
    sim::Episode ep(task, ep_seed, physics, {}, false);
    RngStream rng = RngStream(ep_seed).split(0x4a4e);
    while (!ep.done()) {
      sim::Action a{};
      for (std::size_t d = 0; d < 3; ++d) a[d] = mean[d] + sd[d] * rng.normal();
      ep.act(a);
    }
    logs.push_back({ep_seed, ep.success(), ep.steps(), ep.force_reads()});
  }
  return finish(task, std::move(logs));
}

Real AblationTable::task_mean(Variant v, sim::Task task) const {
  Real sum = 0;
  std::size_t n = 0;
  for (const auto& c : cells)
    if (c.variant == v) {
      sum += c.rates[static_cast<std::size_t>(task)];
      ++n;
    }
  if (n == 0) throw InputError(std::string("ablation table has no rows for ") + variant_name(v));
  return sum / Real(n);
}

Real AblationTable::mean(Variant v) const {
  Real sum = 0;
  for (sim::Task t : sim::kAllTasks) sum += task_mean(v, t);
  return sum / Real(sim::kAllTasks.size());
}

std::string AblationTable::to_string() const {
  std::vector<Variant> seen;
  for (const auto& c : cells)
    if (std::find(seen.begin(), seen.end(), c.variant) == seen.end()) seen.push_back(c.variant);
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s %8s\n", "variant", "wipe", "press", "insert", "mean");
  out << line;
  for (Variant v : seen) {
    std::snprintf(line, sizeof line, "%-16s %7.1f%% %7.1f%% %7.1f%% %7.1f%%\n", variant_name(v),
                  100 * task_mean(v, sim::Task::wipe), 100 * task_mean(v, sim::Task::press),
                  100 * task_mean(v, sim::Task::insert), 100 * mean(v));
    out << line;
  }
  return out.str();
}

AblationTable run_ablation(const sim::Dataset& dataset, const TrainConfig& base, const AblationOptions& options) {
  AblationTable table;
  table.episodes = options.episodes;
  const sim::NormalizationStats stats = sim::compute_stats(dataset);
  for (Variant v : options.variants) {
    for (std::uint64_t seed : options.seeds) {
      TrainConfig cfg = base;
      cfg.variant = v;
      cfg.seed = seed;
      TrainingState state(cfg, stats);
      const TrainReport report = train(state, dataset);
      AblationCell cell{v, seed, {}, 0, report.wall_seconds};
      for (sim::Task t : sim::kAllTasks) {
        const EvalResult r = evaluate(*state.model, stats, t, options.episodes, options.eval_seed, cfg.sampler_steps,
                                      dataset.physics, dataset.noise);
        cell.rates[static_cast<std::size_t>(t)] = r.rate;
        cell.mean += r.rate / Real(sim::kAllTasks.size());
      }
      if (options.on_cell) options.on_cell(cell);
      table.cells.push_back(cell);
    }
  }
  return table;
}

ProbeResult linear_probe(const Tensor& train_x, const Tensor& train_y, const Tensor& test_x, const Tensor& test_y,
                         Real ridge) {
  if (train_x.rows() != train_y.rows() || test_x.rows() != test_y.rows() || train_x.cols() != test_x.cols() ||
      train_y.cols() != test_y.cols())
    throw DimensionError("linear_probe: inconsistent shapes");
  using Mat = Eigen::MatrixXd;
  auto design = [](const Tensor& x) {
    Mat m(x.rows(), x.cols() + 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) m(i, j) = x.at(i, j);
      m(i, x.cols()) = 1;
    }
    return m;
  };
  auto targets = [](const Tensor& y) {
    Mat m(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) m(i, j) = y.at(i, j);
    return m;
  };
  const Mat X = design(train_x), Y = targets(train_y);
  Mat gram = X.transpose() * X;
  gram.diagonal().array() += double(ridge) * double(X.rows());
  const Mat W = gram.ldlt().solve(X.transpose() * Y);
  const Mat pred = design(test_x) * W;
  const Mat truth = targets(test_y);
  ProbeResult r;
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    const double mean = truth.col(j).mean();
    const double sst = (truth.col(j).array() - mean).square().sum();
    const double sse = (truth.col(j) - pred.col(j)).squaredNorm();
    r.r2.push_back(sst > 0 ? Real(1 - sse / sst) : Real(0));
    r.mean_r2 += r.r2.back() / Real(truth.cols());
  }
  return r;
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> steps_of(const sim::Dataset& dataset,
                                                          std::span<const std::size_t> episodes) {
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  for (std::size_t e : episodes)
    for (std::size_t t = 0; t < dataset.episodes.at(e).length; ++t) picks.emplace_back(e, t);
  return picks;
}

}  // namespace

Tensor predicted_force_tokens(const PolicyModel& model, const sim::Dataset& dataset,
                              const sim::NormalizationStats& stats, std::span<const std::size_t> episodes) {
  if (model.variant() != Variant::fdm_learnable) throw ContractError("predicted tokens need variant fdm_learnable");
  const auto picks = steps_of(dataset, episodes);
  if (picks.empty()) throw InputError("predicted_force_tokens: no steps");
  const std::size_t width = model.config().hidden_dim;
  Tensor out({picks.size(), width});
  ad::NoGradGuard no_grad;
  constexpr std::size_t chunk = 128;
  for (std::size_t begin = 0; begin < picks.size(); begin += chunk) {
    const std::size_t n = std::min(chunk, picks.size() - begin);
    TrainingBatch batch = make_batch(dataset, std::span(picks).subspan(begin, n), stats, 1, false);
    const Encoded e = model.encode(batch.inputs, RunMode::sensor_free_inference);
    const Tensor& tokens = e.predicted->embedding.value();
    std::copy(tokens.storage().begin(), tokens.storage().end(), out.storage().begin() + begin * width);
  }
  return out;
}

Tensor clean_wrenches(const sim::Dataset& dataset, std::span<const std::size_t> episodes) {
  std::vector<Real> rows;
  for (std::size_t e : episodes) rows.insert(rows.end(), dataset.episodes.at(e).clean.begin(), dataset.episodes.at(e).clean.end());
  if (rows.empty()) throw InputError("clean_wrenches: no steps");
  const std::size_t n = rows.size() / sim::kForceDim;
  return Tensor({n, sim::kForceDim}, std::move(rows));
}

Real mean_distill_loss(const PolicyModel& model, const sim::Dataset& dataset, const sim::NormalizationStats& stats,
                       std::size_t batch_size) {
  if (model.variant() != Variant::fdm_learnable) throw ContractError("distillation loss needs variant fdm_learnable");
  std::vector<std::size_t> all(dataset.episodes.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto picks = steps_of(dataset, all);
  ad::NoGradGuard no_grad;
  Real sum = 0;
  for (std::size_t begin = 0; begin < picks.size(); begin += batch_size) {
    const std::size_t n = std::min(batch_size, picks.size() - begin);
    TrainingBatch batch = make_batch(dataset, std::span(picks).subspan(begin, n), stats, 1, true);
    const Encoded e = model.encode(batch.inputs, RunMode::training);
    sum += distill_loss(*e.predicted, *e.actual).item();
  }
  return sum / Real(picks.size());
}

}  // namespace forcedistill
