// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "forcedistill/actionexpert/policy_head.hpp"
#include "forcedistill/common/error.hpp"
#include "forcedistill/numerics/gradcheck.hpp"

namespace fd = forcedistill;
namespace ad = fd::ad;
using fd::Real;
using fd::Tensor;

namespace {

double mean_tau(double a, double b, std::uint64_t seed) {
  fd::RngStream rng(seed);
  double s = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Real t = fd::sample_tau(rng, a, b);
    EXPECT_GE(t, fd::kTauMin);
    EXPECT_LE(t, fd::kTauMax);
    s += t;
  }
  return s / n;
}

fd::ModelConfig head_config() {
  fd::ModelConfig c;
  c.hidden_dim = 16;
  c.heads = 2;
  c.horizon = 4;
  return c;
}

}  // namespace

TEST(Tau, UniformSpecialCase) { EXPECT_NEAR(mean_tau(1, 1, 1), 0.5, 0.01); }

TEST(Tau, DefaultBetaMean) { EXPECT_NEAR(mean_tau(1.5, 1, 2), 0.6, 0.01); }

TEST(Tau, InvalidParametersRejected) {
  fd::RngStream rng(0);
  EXPECT_THROW(fd::sample_tau(rng, 0, 1), fd::ConfigError);
}

TEST(Corrupt, Limits) {
  Tensor a = Tensor::matrix({{2, -1}}), e = Tensor::matrix({{0.5, 3}});
  EXPECT_EQ(fd::corrupt_actions(a, e, 0).noisy, e);
  EXPECT_EQ(fd::corrupt_actions(a, e, 1).noisy, a);
  EXPECT_EQ(fd::corrupt_actions(Tensor::vector({2}), Tensor::vector({0}), 0.5).noisy, Tensor::vector({1}));
}

TEST(Corrupt, InterpolationInvariantAndShapeCheck) {
  fd::RngStream rng(4);
  Tensor a = rng.normal_tensor({8, 3}), e = rng.normal_tensor({8, 3});
  auto s = fd::corrupt_actions(a, e, 0.37);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(s.noisy[i], 0.37 * a[i] + (1 - 0.37) * e[i]);
  EXPECT_THROW(fd::corrupt_actions(a, rng.normal_tensor({8, 2}), 0.5), fd::DimensionError);
}

TEST(Target, Examples) {
  Tensor a = Tensor::vector({1, 2});
  EXPECT_EQ(fd::target_field(a, a), Tensor::vector({0, 0}));
  EXPECT_EQ(fd::target_field(a, Tensor::vector({0, 0})), Tensor::vector({-1, -2}));
}

TEST(Target, PathVelocityIsNegatedTarget) {
  fd::RngStream rng(5);
  Tensor a = rng.normal_tensor({4, 3}), e = rng.normal_tensor({4, 3});
  const Real tau = 0.4, h = 1e-6;
  auto up = fd::corrupt_actions(a, e, tau + h).noisy;
  auto down = fd::corrupt_actions(a, e, tau - h).noisy;
  auto u = fd::target_field(a, e);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR((up[i] - down[i]) / (2 * h), -u[i], 1e-8);
}

TEST(FlowLoss, Examples) {
  fd::RngStream rng(6);
  Tensor u = rng.normal_tensor({4, 3});
  EXPECT_EQ(fd::fm_loss(ad::Var::constant(u), ad::Var::constant(u)).item(), 0.0);
  Tensor v = u;
  v[5] += 1;
  EXPECT_NEAR(fd::fm_loss(ad::Var::constant(v), ad::Var::constant(u)).item(), 1.0, 1e-15);
  Tensor w = rng.normal_tensor({4, 3});
  double want = 0;
  for (std::size_t i = 0; i < u.size(); ++i) want += (w[i] - u[i]) * (w[i] - u[i]);
  EXPECT_NEAR(fd::fm_loss(ad::Var::constant(w), ad::Var::constant(u)).item(), want, 1e-12);
}

TEST(Sampler, ZeroFieldReturnsNoise) {
  fd::RngStream rng(7);
  Tensor e = rng.normal_tensor({4, 3});
  auto out = fd::integrate_flow(e, 10, [](const Tensor& a, Real) { return Tensor::zeros_like(a); });
  EXPECT_EQ(out, e);
}

TEST(Sampler, ConstantFieldTelescopes) {
  fd::RngStream rng(8);
  Tensor e = rng.normal_tensor({4, 3});
  for (int steps : {1, 3, 10}) {
    auto out = fd::integrate_flow(e, steps, [](const Tensor& a, Real) { return Tensor(a.shape(), 0.75); });
    for (std::size_t i = 0; i < e.size(); ++i) EXPECT_NEAR(out[i], e[i] - 0.75, 1e-12);
  }
}

TEST(Sampler, ClosedFormFieldRecoversDemonstration) {
  fd::RngStream rng(9);
  Tensor target = rng.normal_tensor({8, 3});
  auto field = [&](const Tensor& a, Real tau) {
    Tensor v(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) v[i] = (a[i] - target[i]) / (1 - tau);
    return v;
  };
  for (int steps : {1, 2, 5, 10, 37, 100}) {
    auto out = fd::integrate_flow(rng.normal_tensor({8, 3}), steps, field);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], target[i], 1e-6) << steps;
  }
  // One step lands exactly: A0 - (A0 - A*) = A*.
  Tensor e = rng.normal_tensor({8, 3});
  auto once = fd::integrate_flow(e, 1, field);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(once[i], target[i], 1e-15);
}

TEST(Sampler, DivergenceNamesTheStep) {
  try {
    fd::integrate_flow(Tensor({2, 2}, 1.0), 5, [](const Tensor& a, Real tau) {
      return Tensor(a.shape(), tau > 0.5 ? std::numeric_limits<Real>::infinity() : Real(0));
    });
    FAIL() << "no exception";
  } catch (const fd::DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("step 3"), std::string::npos) << e.what();
  }
}

TEST(Head, ShapeAndZeroOutputProjection) {
  auto c = head_config();
  fd::ParameterStore store;
  fd::RngStream rng(10);
  fd::PolicyHead head(store, c, rng);
  auto features = ad::Var::constant(rng.normal_tensor({2 * 7, 16}));
  auto noisy = ad::Var::constant(rng.normal_tensor({2 * 4, 3}));
  const Real taus[2] = {0.2, 0.9};
  auto v = head.predict_velocity(noisy, taus, features, 7);
  EXPECT_EQ(v.shape(), (fd::Shape{8, 3}));

  head.output().weight->value().fill(0);
  head.output().bias->value().fill(0);
  EXPECT_EQ(head.predict_velocity(noisy, taus, features, 7).value(), Tensor({8, 3}));

  // With a zero field the sampler returns its (de-normalized) noise draw.
  fd::RngStream a(77), b(77);
  auto norm = fd::Standardizer({1, 2, 3}, {2, 2, 2});
  auto chunk = head.sample_actions(ad::Var::constant(rng.normal_tensor({7, 16})), 7, 10, a, norm);
  EXPECT_EQ(chunk, norm.denormalize(b.normal_tensor({4, 3})));
}

TEST(Head, GradientCheck) {
  auto c = head_config();
  c.hidden_dim = 8;
  c.horizon = 2;
  c.policy_layers = 1;
  fd::ParameterStore store;
  fd::RngStream rng(11);
  fd::PolicyHead head(store, c, rng);
  Tensor f = rng.normal_tensor({3, 8}), a = rng.normal_tensor({2, 3}), u = rng.normal_tensor({2, 3});
  const Real taus[1] = {0.3};
  auto report = fd::grad_check(
      [&] {
        return fd::fm_loss(head.predict_velocity(ad::Var::constant(a), taus, ad::Var::constant(f), 3),
                           ad::Var::constant(u));
      },
      store.trainable());
  EXPECT_TRUE(report.passed) << report.worst_parameter << " " << report.max_relative_error;
}
