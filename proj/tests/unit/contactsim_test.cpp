// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "forcedistill/common/error.hpp"
#include "forcedistill/contactsim/demos.hpp"

namespace fd = forcedistill;
namespace sim = fd::sim;
using fd::Real;

namespace {

const sim::Action kIdle{0, 0, -1};

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("forcedistill_contactsim_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Contact, FreeSpaceHasZeroWrench) {
  for (auto task : sim::kAllTasks) {
    auto w = sim::make_world(task, 3);
    auto f = sim::contact_force(w, {});
    EXPECT_FALSE(f.in_contact);
    EXPECT_EQ(f.clean, (sim::Wrench{0, 0, 0}));
  }
}

TEST(Contact, StaticPenetrationFollowsSpringLaw) {
  auto w = sim::make_world(sim::Task::wipe, 1);
  w.y = w.fixture.board_y - 0.01;
  w.vx = w.vy = 0;
  auto f = sim::contact_force(w, {});
  EXPECT_TRUE(f.in_contact);
  EXPECT_NEAR(f.normal, 1.0, 1e-12);
  EXPECT_NEAR(f.clean[1], 1.0, 1e-12);
  EXPECT_NEAR(f.penetration, 0.01, 1e-15);
}

TEST(Contact, DampingOnlyWhilePenetrating) {
  auto w = sim::make_world(sim::Task::wipe, 1);
  w.y = w.fixture.board_y - 0.01;
  w.vy = -0.2;
  EXPECT_NEAR(sim::contact_force(w, {}).normal, 1.0 + 5 * 0.2, 1e-12);
  w.vy = 0.2;  // separating: spring only
  EXPECT_NEAR(sim::contact_force(w, {}).normal, 1.0, 1e-12);
}

TEST(Dynamics, SpeedDecaysWithoutInputOrContact) {
  auto w = sim::make_world(sim::Task::wipe, 2);
  w.x = 0.5;
  w.y = 0.6;
  w.vx = 0.3;
  w.vy = 0.25;
  Real prev = std::hypot(w.vx, w.vy);
  for (int i = 0; i < 1000; ++i) {
    auto r = sim::step(w, kIdle, {});
    ASSERT_FALSE(r.force.in_contact);
    w = r.world;
    const Real speed = std::hypot(w.vx, w.vy);
    EXPECT_LE(speed, prev);
    prev = speed;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(Dynamics, ActionsAreClipped) {
  auto w = sim::make_world(sim::Task::press, 4);
  sim::Action big{50, -50, 9};
  sim::Action clipped{1, -1, 1};
  EXPECT_EQ(sim::step(w, big, {}).world, sim::step(w, clipped, {}).world);
}

TEST(Dynamics, TrajectoryIsDeterministic) {
  auto run = [] {
    auto w = sim::make_world(sim::Task::insert, 9);
    fd::RngStream rng(3);
    for (int i = 0; i < 100; ++i) {
      sim::Action a{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      w = sim::step(w, a, {}).world;
    }
    return w;
  };
  EXPECT_EQ(run(), run());
}

TEST(Sensor, NoiseOffReturnsClean) {
  sim::SensorState s;
  fd::RngStream rng(1);
  sim::NoiseConfig off{0, 0, 0.05};
  sim::Wrench clean{0.4, 1.7, 0.02};
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sim::sense_force(clean, s, off, rng).sensed, clean);
}

TEST(Sensor, WhiteComponentStd) {
  sim::SensorState s;
  fd::RngStream rng(2);
  sim::NoiseConfig cfg;
  sim::Wrench clean{0, 1, 0};
  double sum = 0, sum2 = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto r = sim::sense_force(clean, s, cfg, rng);
    const double w = r.sensed[1] - clean[1] - r.bias[1];
    sum += w;
    sum2 += w * w;
  }
  const double var = sum2 / n - (sum / n) * (sum / n);
  EXPECT_NEAR(std::sqrt(var), 0.2, 0.01);
}

TEST(Sensor, DecompositionIsExact) {
  sim::SensorState s;
  fd::RngStream rng(3);
  sim::Wrench clean{0.1, 2.0, 0.005};
  for (int i = 0; i < 100; ++i) {
    auto r = sim::sense_force(clean, s, {}, rng);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(r.sensed[k] - clean[k], r.white[k] + r.bias[k], 1e-15);
  }
}

TEST(Sensor, BiasVarianceGrowsWithTime) {
  sim::NoiseConfig cfg;
  const int seeds = 200, steps = 200;
  std::vector<double> var(steps, 0);
  for (int k = 0; k < seeds; ++k) {
    sim::SensorState s;
    fd::RngStream rng(1000 + k);
    for (int t = 0; t < steps; ++t) {
      auto r = sim::sense_force({}, s, cfg, rng);
      var[t] += r.bias[0] * r.bias[0] / seeds;
    }
  }
  // Expected variance after t+1 steps is (t+1) * drift^2.
  const double d2 = cfg.drift_std * cfg.drift_std;
  EXPECT_NEAR(var[49] / (50 * d2), 1.0, 0.3);
  EXPECT_NEAR(var[199] / (200 * d2), 1.0, 0.3);
  EXPECT_GT(var[199], 2 * var[49]);
}

TEST(Render, DeterministicAndInRange) {
  auto w = sim::make_world(sim::Task::wipe, 5);
  auto a = sim::render(w);
  EXPECT_EQ(a, sim::render(w));
  EXPECT_EQ(a.pixels.size(), 3u * 32 * 32);
  for (Real p : a.pixels) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    EXPECT_NEAR(p * 255, std::round(p * 255), 1e-9);
  }
}

TEST(Render, EndEffectorMotionIsVisible) {
  for (auto task : sim::kAllTasks) {
    auto w = sim::make_world(task, 6);
    auto moved = w;
    moved.x += 0.05;
    EXPECT_NE(sim::render(w), sim::render(moved)) << sim::task_name(task);
  }
}

TEST(Render, WipedMarksLookDifferent) {
  auto w = sim::make_world(sim::Task::wipe, 7);
  auto wiped = w;
  std::fill(wiped.wiped.begin(), wiped.wiped.end(), 1);
  auto a = sim::render(w), b = sim::render(wiped);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) diff += a.pixels[i] != b.pixels[i];
  EXPECT_GT(diff, 10u);
}

TEST(Success, FreshEpisodeWithIdleActionsFails) {
  for (auto task : sim::kAllTasks) {
    auto w = sim::make_world(task, 8);
    EXPECT_FALSE(sim::evaluate_success(w));
    for (int i = 0; i < 200; ++i) w = sim::step(w, kIdle, {}).world;
    EXPECT_FALSE(sim::evaluate_success(w)) << sim::task_name(task);
  }
}

TEST(Success, WipeThresholdIsStrict) {
  auto w = sim::make_world(sim::Task::wipe, 8);
  w.wiped.assign(100, 0);
  std::fill(w.wiped.begin(), w.wiped.begin() + 98, 1);
  EXPECT_FALSE(sim::evaluate_success(w));
  w.wiped[98] = 1;
  EXPECT_TRUE(sim::evaluate_success(w));
}

TEST(Expert, SucceedsOnNearlyEveryEpisode) {
  for (auto task : sim::kAllTasks) {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      auto w = sim::make_world(task, seed);
      while (!sim::evaluate_success(w) && w.steps < 200) {
        auto a = sim::expert_action(w, {});
        for (Real v : a) {
          ASSERT_GE(v, -1.0);
          ASSERT_LE(v, 1.0);
        }
        w = sim::step(w, a, {}).world;
      }
      wins += sim::evaluate_success(w);
    }
    EXPECT_GE(wins, 190) << sim::task_name(task);
  }
}

TEST(Expert, WipeContactForceStaysInBand) {
  double total = 0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto d = sim::record_expert(sim::Task::wipe, seed);
    for (std::size_t t = 0; t < d.length; ++t)
      if (d.clean_at(t)[1] > 0) {
        total += d.clean_at(t)[1];
        ++n;
      }
  }
  ASSERT_GT(n, 0u);
  EXPECT_GE(total / n, 1.0);
  EXPECT_LE(total / n, 2.0);
}

TEST(Episode, SensorFreeEpisodeNeverReadsForce) {
  sim::Episode ep(sim::Task::press, 3, {}, {}, false);
  while (!ep.done()) {
    auto obs = ep.observe();
    EXPECT_FALSE(obs.force.has_value());
    ep.act(sim::expert_action(ep.world(), ep.physics()));
  }
  EXPECT_EQ(ep.force_reads(), 0);
}

TEST(Demos, CountSuccessAndDeterminism) {
  auto a = sim::generate_demos(sim::Task::wipe, 50, 7);
  ASSERT_EQ(a.size(), 50u);
  for (const auto& d : a) {
    EXPECT_TRUE(d.success);
    EXPECT_GT(d.length, 0u);
  }
  auto b = sim::generate_demos(sim::Task::wipe, 50, 7);
  EXPECT_TRUE(a == b);
}

TEST(Demos, ImpossibleBudgetRaisesGenerationError) {
  sim::PhysicsConstants p;
  p.episode_cap = 3;
  EXPECT_THROW(sim::generate_demos(sim::Task::press, 2, 1, p), fd::GenerationError);
}

TEST(Demos, AuditCatchesCorruption) {
  auto ds = sim::generate_dataset(sim::kAllTasks, 3, 11);
  EXPECT_NO_THROW(sim::audit(ds));
  auto bad = ds;
  bad.episodes[1].actions[0] = 2;
  EXPECT_THROW(sim::audit(bad), fd::InvariantError);
  bad = ds;
  bad.episodes[0].states.pop_back();
  EXPECT_THROW(sim::audit(bad), fd::InvariantError);
  bad = ds;
  bad.episodes[2].sensed[4] = NAN;
  EXPECT_THROW(sim::audit(bad), fd::InvariantError);
}

TEST(Demos, SaveLoadRoundTripAndStableBytes) {
  auto ds = sim::generate_dataset(sim::kAllTasks, 2, 5);
  auto dir1 = scratch_dir("a"), dir2 = scratch_dir("b");
  sim::save_dataset(ds, dir1);
  sim::save_dataset(sim::generate_dataset(sim::kAllTasks, 2, 5), dir2);
  auto loaded = sim::load_dataset(dir1);
  ASSERT_EQ(loaded.episodes.size(), ds.episodes.size());
  for (std::size_t i = 0; i < ds.episodes.size(); ++i) EXPECT_TRUE(loaded.episodes[i] == ds.episodes[i]) << i;
  EXPECT_EQ(sim::load_stats(dir1), sim::compute_stats(ds));
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir1)) {
    if (!entry.is_regular_file()) continue;
    auto rel = std::filesystem::relative(entry.path(), dir1);
    EXPECT_EQ(slurp(entry.path()), slurp(dir2 / rel)) << rel;
  }
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST(Demos, LoadingMissingDatasetIsAnIoError) {
  EXPECT_THROW(sim::load_dataset(scratch_dir("missing")), fd::IoError);
}
