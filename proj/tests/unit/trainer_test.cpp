// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "forcedistill/common/error.hpp"
#include "forcedistill/trainer/evaluate.hpp"
#include "forcedistill/trainer/trainer.hpp"

namespace fd = forcedistill;
namespace sim = fd::sim;
using fd::Real;
using fd::Tensor;
using fd::Variant;

namespace {

fd::ModelConfig tiny_model() {
  fd::ModelConfig c;
  c.hidden_dim = 16;
  c.heads = 2;
  c.ffn_multiplier = 2;
  c.vocab_size = 64;
  c.horizon = 4;
  c.frozen_layers_total = 2;
  c.frozen_layers_used = 1;
  c.policy_layers = 1;
  return c;
}

fd::TrainConfig tiny_config(Variant v, long steps = 4) {
  fd::TrainConfig t;
  t.variant = v;
  t.model = tiny_model();
  t.batch_size = 4;
  t.steps = steps;
  t.sampler_steps = 3;
  return t;
}

const sim::Dataset& shared_dataset() {
  static const sim::Dataset ds = sim::generate_dataset(sim::kAllTasks, 2, 21);
  return ds;
}

fd::TrainingBatch sample_batch(const fd::PolicyModel& model, const sim::NormalizationStats& stats) {
  const auto& ds = shared_dataset();
  std::vector<std::pair<std::size_t, std::size_t>> picks{{0, 3}, {2, 10}, {4, 0}};
  return fd::make_batch(ds, picks, stats, model.config().horizon, true);
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("forcedistill_trainer_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Variants, NamesRoundTrip) {
  for (auto v : fd::kAllVariants) EXPECT_EQ(fd::parse_variant(fd::variant_name(v)), v);
  EXPECT_THROW(fd::parse_variant("fdm"), fd::ConfigError);
  EXPECT_TRUE(fd::needs_force_sensor(Variant::no_fdm));
  EXPECT_TRUE(fd::needs_force_sensor(Variant::fdm_force_token));
  EXPECT_FALSE(fd::needs_force_sensor(Variant::fdm_learnable));
  EXPECT_FALSE(fd::needs_force_sensor(Variant::no_force));
}

TEST(Model, LayoutDependsOnVariant) {
  fd::PolicyModel none(tiny_model(), Variant::no_force, 0);
  fd::PolicyModel learn(tiny_model(), Variant::fdm_learnable, 0);
  EXPECT_EQ(none.layout(3).force, 0u);
  EXPECT_EQ(learn.layout(3).force, 1u);
  EXPECT_EQ(learn.layout(3).total(), 16u + 3 + 1 + 1);
}

TEST(Model, LossDecompositionIsExact) {
  fd::PolicyModel model(tiny_model(), Variant::fdm_learnable, 1);
  auto stats = sim::compute_stats(shared_dataset());
  auto batch = sample_batch(model, stats);
  fd::RngStream rng(5);
  Tensor eps = rng.normal_tensor(batch.actions.shape());
  std::vector<Real> taus{0.2, 0.5, 0.9};
  for (auto [lambda, mu] : {std::pair<Real, Real>{1, 1}, {0.3, 2.5}, {0, 1}, {4, 0}}) {
    auto terms = model.loss(batch, taus, eps, lambda, mu);
    ASSERT_TRUE(terms.distill && terms.recon);
    const Real want = terms.flow.item() + lambda * terms.distill->item() + mu * terms.recon->item();
    EXPECT_NEAR(terms.total.item(), want, 1e-10);
  }
}

TEST(Model, ZeroLambdaStillTrainsQueryThroughActionLoss) {
  fd::PolicyModel model(tiny_model(), Variant::fdm_learnable, 2);
  auto stats = sim::compute_stats(shared_dataset());
  auto batch = sample_batch(model, stats);
  fd::RngStream rng(6);
  Tensor eps = rng.normal_tensor(batch.actions.shape());
  std::vector<Real> taus{0.3, 0.6, 0.8};

  model.store().zero_grad();
  model.loss(batch, taus, eps, 0, 0).total.backward();
  auto p = model.store().find("fdm.query");
  ASSERT_TRUE(p->has_grad());
  double n = 0;
  for (auto g : p->grad().storage()) n += g * g;
  EXPECT_GT(n, 0.0);
  // The actual-force branch only feeds the distill and recon terms.
  auto enc = model.store().find("fdm.actual_encoder.weight");
  double m = 0;
  if (enc->has_grad())
    for (auto g : enc->grad().storage()) m += g * g;
  EXPECT_EQ(m, 0.0);
}

TEST(Model, ForceTokenVariantHasNoDistillTerm) {
  fd::PolicyModel model(tiny_model(), Variant::fdm_force_token, 3);
  auto stats = sim::compute_stats(shared_dataset());
  auto batch = sample_batch(model, stats);
  fd::RngStream rng(7);
  std::vector<Real> taus{0.3, 0.6, 0.8};
  auto terms = model.loss(batch, taus, rng.normal_tensor(batch.actions.shape()), 1, 1);
  EXPECT_FALSE(terms.distill.has_value());
  EXPECT_FALSE(terms.recon.has_value());
  EXPECT_EQ(terms.total.item(), terms.flow.item());
}

TEST(Model, ModeRules) {
  auto stats = sim::compute_stats(shared_dataset());
  sim::Episode ep(sim::Task::wipe, 1);
  auto obs = ep.observe();
  const std::string instr = sim::task_instruction(sim::Task::wipe);
  auto with_force = fd::observation_inputs(obs, instr, stats, true);
  auto without = fd::observation_inputs(obs, instr, stats, false);

  fd::PolicyModel sensor(tiny_model(), Variant::no_fdm, 0);
  EXPECT_THROW(sensor.encode(without, fd::RunMode::sensor_free_inference), fd::ModeError);
  EXPECT_THROW(sensor.encode(without, fd::RunMode::training), fd::ModeError);
  EXPECT_NO_THROW(sensor.encode(with_force, fd::RunMode::training));

  fd::PolicyModel learn(tiny_model(), Variant::fdm_learnable, 0);
  EXPECT_THROW(learn.encode(with_force, fd::RunMode::sensor_free_inference), fd::ModeError);
  auto e = learn.encode(without, fd::RunMode::sensor_free_inference);
  EXPECT_TRUE(e.predicted.has_value());
  EXPECT_FALSE(e.actual.has_value());
}

TEST(Batch, ChunksPadWithFinalAction) {
  const auto& ds = shared_dataset();
  auto stats = sim::compute_stats(ds);
  const std::size_t last = ds.episodes[0].length - 1;
  std::vector<std::pair<std::size_t, std::size_t>> picks{{0, last - 1}};
  auto batch = fd::make_batch(ds, picks, stats, 4, false);
  ASSERT_EQ(batch.actions.shape(), (fd::Shape{4, 3}));
  for (std::size_t r = 2; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(batch.actions.at(r, c), batch.actions.at(1, c));
  EXPECT_FALSE(batch.inputs.force.has_value());
}

TEST(Training, RepeatedRunsAreBitIdenticalAndFrozenStackUntouched) {
  auto run = [] {
    std::unique_ptr<fd::TrainingState> state;
    auto report = fd::train(shared_dataset(), tiny_config(Variant::fdm_learnable, 5), &state);
    return std::make_pair(report, state->model->frozen_digest());
  };
  fd::PolicyModel fresh(tiny_model(), Variant::fdm_learnable, 0);
  auto [a, da] = run();
  auto [b, db] = run();
  ASSERT_EQ(a.steps.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a.steps[i].total, b.steps[i].total);
    EXPECT_EQ(a.steps[i].distill, b.steps[i].distill);
    EXPECT_EQ(a.steps[i].step, long(i + 1));
    EXPECT_NEAR(a.steps[i].total,
                a.steps[i].flow + *a.steps[i].distill + *a.steps[i].recon, 1e-10);
  }
  EXPECT_EQ(da, db);
  EXPECT_EQ(da, fresh.frozen_digest());
}

TEST(Training, FrozenStackIsSharedAcrossVariantsAndSeeds) {
  fd::PolicyModel a(tiny_model(), Variant::no_force, 0);
  fd::PolicyModel b(tiny_model(), Variant::fdm_learnable, 5);
  EXPECT_EQ(a.frozen_digest(), b.frozen_digest());
}

TEST(Training, MetricsLineOmitsAbsentTerms) {
  fd::StepLog log;
  log.step = 3;
  log.total = log.flow = 1.5;
  const auto line = fd::metrics_line(log);
  EXPECT_EQ(line.find("distill"), std::string::npos);
  log.distill = 0.1;
  log.recon = 0.2;
  EXPECT_NE(fd::metrics_line(log).find("\"distill\""), std::string::npos);
  EXPECT_EQ(fd::metrics_line(log).find('\n'), std::string::npos);
}

TEST(Checkpoint, RoundTripAndBitExactResume) {
  const auto& ds = shared_dataset();
  auto cfg = tiny_config(Variant::fdm_learnable, 6);
  std::unique_ptr<fd::TrainingState> straight;
  auto full = fd::train(ds, cfg, &straight);

  fd::TrainingState half(cfg, sim::compute_stats(ds));
  half.config.steps = 3;
  fd::train(half, ds);
  auto path = scratch("ckpt.bin");
  fd::save_checkpoint(half, path);
  auto loaded = fd::load_checkpoint(path);
  EXPECT_EQ(loaded->step, 3);
  EXPECT_EQ(loaded->stats, half.stats);
  for (const auto& [name, p] : half.model->store().all())
    EXPECT_EQ(loaded->model->store().find(name)->value(), p->value()) << name;

  loaded->config.steps = 6;
  auto rest = fd::train(*loaded, ds);
  ASSERT_EQ(rest.steps.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rest.steps[i].step, full.steps[i + 3].step);
    EXPECT_EQ(rest.steps[i].total, full.steps[i + 3].total);
  }
  for (const auto& [name, p] : straight->model->store().all())
    EXPECT_EQ(loaded->model->store().find(name)->value(), p->value()) << name;
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFileIsAnIoError) {
  auto path = scratch("bad.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint";
  }
  EXPECT_THROW(fd::load_checkpoint(path), fd::IoError);
  EXPECT_THROW(fd::load_checkpoint(scratch("absent.bin")), fd::IoError);
  std::filesystem::remove(path);
}

TEST(Training, NonFiniteLossAbortsWithStep) {
  fd::TrainingState state(tiny_config(Variant::no_force, 3), sim::compute_stats(shared_dataset()));
  for (auto& p : state.model->store().trainable())
    if (p->name().rfind("policy", 0) == 0) p->value().fill(NAN);
  try {
    fd::train(state, shared_dataset());
    FAIL() << "no exception";
  } catch (const fd::NumericalError& e) {
    EXPECT_EQ(e.step(), 1);
  }
}

TEST(Config, ValidationRejectsNegativeWeights) {
  auto cfg = tiny_config(Variant::fdm_learnable);
  cfg.lambda = -1;
  EXPECT_THROW(cfg.validate(), fd::ConfigError);
  auto json = fd::train_config_json(tiny_config(Variant::no_fdm));
  EXPECT_EQ(fd::train_config_from_json(json), tiny_config(Variant::no_fdm));
}

TEST(Evaluation, WilsonInterval) {
  auto ci = fd::wilson_interval(50, 100);
  EXPECT_LE((ci.high - ci.low) / 2, 0.10);
  EXPECT_LT(ci.low, 0.5);
  EXPECT_GT(ci.high, 0.5);
  for (std::size_t k = 0; k <= 100; ++k) EXPECT_LE((fd::wilson_interval(k, 100).high - fd::wilson_interval(k, 100).low) / 2, 0.10);
  auto zero = fd::wilson_interval(0, 100);
  EXPECT_EQ(zero.low, 0.0);
  EXPECT_GT(zero.high, 0.0);
}

TEST(Evaluation, DeterministicAndSensorFree) {
  const auto& ds = shared_dataset();
  auto stats = sim::compute_stats(ds);
  fd::PolicyModel model(tiny_model(), Variant::fdm_learnable, 0);
  auto a = fd::evaluate(model, stats, sim::Task::press, 4, 99, 3);
  auto b = fd::evaluate(model, stats, sim::Task::press, 4, 99, 3);
  EXPECT_EQ(a.logs, b.logs);
  EXPECT_EQ(a.rate, b.rate);
  EXPECT_EQ(a.force_reads(), 0);

  fd::PolicyModel sensor(tiny_model(), Variant::no_fdm, 0);
  auto c = fd::evaluate(sensor, stats, sim::Task::press, 2, 99, 3);
  EXPECT_GT(c.force_reads(), 0);
}

TEST(Evaluation, UntrainedPolicyResemblesRandomActions) {
  const auto& ds = shared_dataset();
  auto stats = sim::compute_stats(ds);
  fd::PolicyModel model(tiny_model(), Variant::no_force, 0);
  const std::size_t n = 100;
  for (auto task : sim::kAllTasks) {
    auto policy = fd::evaluate(model, stats, task, n, 5, 3);
    auto random = fd::evaluate_random(task, n, 5, stats);
    // Two-proportion z-test at the 1% level.
    const double p = double(policy.successes + random.successes) / (2 * n);
    const double se = std::sqrt(std::max(p * (1 - p) * 2 / n, 1e-12));
    const double z = (policy.rate - random.rate) / se;
    EXPECT_LT(std::abs(z), 2.576) << sim::task_name(task) << " policy " << policy.rate << " random " << random.rate;
  }
}

TEST(Probe, RecoversLinearMap) {
  fd::RngStream rng(3);
  Tensor x = rng.normal_tensor({200, 4}), xt = rng.normal_tensor({50, 4});
  auto f = [](const Tensor& in) {
    Tensor y({in.rows(), 2});
    for (std::size_t r = 0; r < in.rows(); ++r) {
      y.at(r, 0) = 2 * in.at(r, 0) - in.at(r, 3) + 0.5;
      y.at(r, 1) = in.at(r, 1) * 0.1 - 3;
    }
    return y;
  };
  auto res = fd::linear_probe(x, f(x), xt, f(xt));
  ASSERT_EQ(res.r2.size(), 2u);
  EXPECT_NEAR(res.mean_r2, 1.0, 1e-9);
}
