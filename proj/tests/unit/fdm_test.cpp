// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "forcedistill/common/error.hpp"
#include "forcedistill/fdm/force_distillation.hpp"

namespace fd = forcedistill;
namespace ad = fd::ad;
using fd::Real;
using fd::Tensor;

namespace {

struct Rig {
  fd::ModelConfig config;
  fd::ParameterStore store;
  fd::RngStream rng;
  fd::VisionEncoder vision;
  fd::StateEncoder state;
  fd::ForceDistillationModule fdm;
  explicit Rig(fd::ModelConfig c = {}, std::uint64_t seed = 3)
      : config(c), rng(seed), vision(store, config, rng), state(store, config, rng), fdm(store, config, rng) {}

  fd::TokenBlock vision_block(std::size_t batch, std::uint64_t seed) {
    fd::RngStream r(seed);
    Tensor images({batch, config.image_values()});
    for (auto& v : images.storage()) v = r.uniform();
    return vision.encode(images);
  }
  fd::TokenBlock state_block(std::size_t batch, std::uint64_t seed) {
    fd::RngStream r(seed);
    return state.encode(r.normal_tensor({batch, config.state_dim}));
  }
};

void set_identity(const fd::Linear& l) {
  auto& w = l.weight->value();
  w.fill(0);
  for (std::size_t i = 0; i < std::min(w.rows(), w.cols()); ++i) w.at(i, i) = 1;
}

// Plain re-implementation of the prediction head for one sample.
using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

std::vector<double> oracle_predict(const fd::ForceDistillationModule& m, const Mat& context, double eps) {
  const Mat q = mm({context[0]}, to_mat(m.w_q().weight->value()));
  const Mat k = mm(context, to_mat(m.w_k().weight->value()));
  const Mat v = mm(context, to_mat(m.w_v().weight->value()));
  const std::size_t D = q[0].size(), H = m.heads(), dk = D / H, n = context.size();
  std::vector<double> z(D, 0);
  for (std::size_t h = 0; h < H; ++h) {
    std::vector<double> logits(n);
    double mx = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t c = 0; c < dk; ++c) s += q[0][h * dk + c] * k[j][h * dk + c];
      logits[j] = s / std::sqrt(double(dk));
      mx = std::max(mx, logits[j]);
    }
    double total = 0;
    for (auto& l : logits) total += (l = std::exp(l - mx));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < dk; ++c) z[h * dk + c] += logits[j] / total * v[j][h * dk + c];
  }
  Mat pre = mm({z}, to_mat(m.w_o().weight->value()));
  for (std::size_t c = 0; c < D; ++c) pre[0][c] += context[0][c];
  double mean = 0, var = 0;
  for (double x : pre[0]) mean += x;
  mean /= D;
  for (double x : pre[0]) var += (x - mean) * (x - mean);
  var /= D;
  std::vector<double> h(D);
  for (std::size_t c = 0; c < D; ++c)
    h[c] = (pre[0][c] - mean) / std::sqrt(var + eps) * m.norm().gain->value()[c] + m.norm().bias->value()[c];
  Mat up = mm({h}, to_mat(m.ffn().up.weight->value()));
  for (std::size_t c = 0; c < up[0].size(); ++c) {
    const double x = up[0][c] + m.ffn().up.bias->value()[c];
    up[0][c] = 0.5 * x * (1 + std::erf(x / std::sqrt(2.0)));
  }
  Mat down = mm(up, to_mat(m.ffn().down.weight->value()));
  std::vector<double> out(D);
  for (std::size_t c = 0; c < D; ++c) out[c] = h[c] + down[0][c] + m.ffn().down.bias->value()[c];
  return out;
}

}  // namespace

TEST(Context, DefaultSizesGiveEighteenRows) {
  Rig rig;
  auto q = ad::tile_rows(rig.fdm.query()->var(), 1);
  auto ctx = rig.fdm.build_context(q, rig.vision_block(1, 1), rig.state_block(1, 2));
  EXPECT_EQ(ctx.rows_per_sample, 18u);
  EXPECT_EQ(ctx.rows.rows(), 18u);
}

TEST(Context, RowsAreQueryThenVisionThenState) {
  Rig rig;
  auto vision = rig.vision_block(2, 1);
  auto state = rig.state_block(2, 2);
  auto q = ad::tile_rows(rig.fdm.query()->var(), 2);
  auto ctx = rig.fdm.build_context(q, vision, state);
  const auto& rows = ctx.rows.value();
  for (std::size_t b = 0; b < 2; ++b) {
    const std::size_t base = b * 18;
    for (std::size_t c = 0; c < rig.config.hidden_dim; ++c) {
      EXPECT_EQ(rows.at(base, c), rig.fdm.query()->value()[c]);
      EXPECT_EQ(rows.at(base + 1, c), vision.tokens.value().at(b * 16, c));
      EXPECT_EQ(rows.at(base + 16, c), vision.tokens.value().at(b * 16 + 15, c));
      EXPECT_EQ(rows.at(base + 17, c), state.tokens.value().at(b, c));
    }
  }
}

TEST(Context, EmptyVisionBlockRejected) {
  Rig rig;
  fd::TokenBlock empty{ad::Var(), fd::Modality::vision, 0, 1};
  auto q = ad::tile_rows(rig.fdm.query()->var(), 1);
  EXPECT_THROW(rig.fdm.build_context(q, empty, rig.state_block(1, 2)), fd::DimensionError);
}

TEST(QueryAttention, SingleRowContextReturnsQuery) {
  fd::ModelConfig c;
  c.hidden_dim = 2;
  c.heads = 1;
  Rig rig(c);
  for (auto* l : {&rig.fdm.w_q(), &rig.fdm.w_k(), &rig.fdm.w_v()}) set_identity(*l);
  auto p = ad::Var::constant(Tensor::matrix({{0.3, -0.7}}));
  fd::FdmContext ctx{p, 1, 1, 0, 0};
  auto res = rig.fdm.attend(p, ctx);
  EXPECT_EQ(res.weights, std::vector<Real>{1.0});
  EXPECT_EQ(res.heads.value(), p.value());
}

TEST(QueryAttention, TwoIdenticalRowsSplitEvenly) {
  fd::ModelConfig c;
  c.hidden_dim = 2;
  c.heads = 1;
  Rig rig(c);
  for (auto* l : {&rig.fdm.w_q(), &rig.fdm.w_k(), &rig.fdm.w_v()}) set_identity(*l);
  auto p = ad::Var::constant(Tensor::matrix({{1, 0}}));
  auto rows = ad::Var::constant(Tensor::matrix({{1, 0}, {1, 0}}));
  auto res = rig.fdm.attend(p, fd::FdmContext{rows, 1, 2, 0, 0});
  EXPECT_EQ(res.weights, (std::vector<Real>{0.5, 0.5}));
}

TEST(QueryAttention, TwoDimensionalHandExample) {
  fd::ModelConfig c;
  c.hidden_dim = 2;
  c.heads = 1;
  Rig rig(c);
  for (auto* l : {&rig.fdm.w_q(), &rig.fdm.w_k(), &rig.fdm.w_v()}) set_identity(*l);
  auto p = ad::Var::constant(Tensor::matrix({{1, 0}}));
  auto rows = ad::Var::constant(Tensor::matrix({{1, 0}, {0, 1}}));
  auto res = rig.fdm.attend(p, fd::FdmContext{rows, 1, 2, 0, 0});
  // logits [1/sqrt(2), 0]
  const double e = std::exp(1 / std::sqrt(2.0));
  const double a0 = e / (e + 1), a1 = 1 / (e + 1);
  ASSERT_EQ(res.weights.size(), 2u);
  EXPECT_NEAR(res.weights[0], a0, 1e-15);
  EXPECT_NEAR(res.weights[1], a1, 1e-15);
  EXPECT_NEAR(a0, 0.6698, 1e-4);
  EXPECT_NEAR(res.heads.value()[0], a0, 1e-15);
  EXPECT_NEAR(res.heads.value()[1], a1, 1e-15);
}

TEST(QueryAttention, WeightsAreADistributionPerHead) {
  Rig rig;
  std::vector<Real> w;
  rig.fdm.predict(rig.vision_block(3, 5), rig.state_block(3, 6), &w);
  const std::size_t H = rig.config.heads;
  ASSERT_EQ(w.size(), 3 * H * 18);
  for (std::size_t g = 0; g < 3 * H; ++g) {
    double total = 0;
    for (std::size_t j = 0; j < 18; ++j) {
      EXPECT_GE(w[g * 18 + j], 0.0);
      total += w[g * 18 + j];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Prediction, ZeroOutputAndFfnPathsGiveNormalizedQuery) {
  Rig rig;
  rig.fdm.w_o().weight->value().fill(0);
  rig.fdm.ffn().down.weight->value().fill(0);
  rig.fdm.ffn().down.bias->value().fill(0);
  auto token = rig.fdm.predict(rig.vision_block(1, 1), rig.state_block(1, 2));
  const auto& p = rig.fdm.query()->value();
  const std::size_t D = p.size();
  double mean = 0, var = 0;
  for (std::size_t i = 0; i < D; ++i) mean += p[i];
  mean /= D;
  for (std::size_t i = 0; i < D; ++i) var += (p[i] - mean) * (p[i] - mean);
  var /= D;
  ASSERT_EQ(token.embedding.shape(), (fd::Shape{1, D}));
  for (std::size_t i = 0; i < D; ++i)
    EXPECT_NEAR(token.embedding.value()[i], (p[i] - mean) / std::sqrt(var + rig.config.layernorm_eps), 1e-12);
}

TEST(Prediction, MatchesIndependentImplementation) {
  Rig rig({}, 17);
  // Give every parameter a generic value, including the LN affine terms.
  fd::RngStream r(99);
  for (auto& [name, p] : rig.store.all())
    if (name.rfind("fdm.norm", 0) == 0)
      for (auto& v : p->value().storage()) v = 1 + 0.3 * r.normal();
  auto vision = rig.vision_block(2, 8);
  auto state = rig.state_block(2, 9);
  auto token = rig.fdm.predict(vision, state);
  for (std::size_t b = 0; b < 2; ++b) {
    Mat ctx{std::vector<double>(rig.fdm.query()->value().storage().begin(), rig.fdm.query()->value().storage().end())};
    for (std::size_t i = 0; i < 16; ++i) {
      auto row = vision.tokens.value().row(b * 16 + i);
      ctx.emplace_back(row.begin(), row.end());
    }
    auto srow = state.tokens.value().row(b);
    ctx.emplace_back(srow.begin(), srow.end());
    auto want = oracle_predict(rig.fdm, ctx, rig.config.layernorm_eps);
    for (std::size_t c = 0; c < want.size(); ++c) EXPECT_NEAR(token.embedding.value().at(b, c), want[c], 1e-10);
  }
}

TEST(Prediction, QueryRowIsPartOfKeysAndValues) {
  Rig rig({}, 23);
  fd::RngStream r(4);
  rig.fdm.query()->value() = r.normal_tensor({1, rig.config.hidden_dim});
  auto vision = rig.vision_block(1, 1);
  auto state = rig.state_block(1, 2);
  auto q = rig.fdm.query()->var();
  auto full = rig.fdm.output_head(rig.fdm.attend(q, rig.fdm.build_context(q, vision, state)), q);
  // Same context without p's row.
  std::vector<ad::Var> parts{vision.tokens, state.tokens};
  auto rows = ad::concat_rows(parts);
  auto without = rig.fdm.output_head(rig.fdm.attend(q, fd::FdmContext{rows, 1, 17, 16, 1}), q);
  double diff = 0;
  for (std::size_t i = 0; i < full.value().size(); ++i) diff += std::abs(full.value()[i] - without.value()[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST(ActualBranch, ZeroWrenchZeroBiasGivesZeroToken) {
  Rig rig;
  rig.fdm.actual_encoder().bias->value().fill(0);
  auto t = rig.fdm.encode_actual(Tensor({1, 3}), fd::RunMode::training);
  EXPECT_EQ(t.kind, fd::ForceKind::actual);
  EXPECT_EQ(t.embedding.value(), Tensor({1, rig.config.hidden_dim}));
}

TEST(ActualBranch, AffineIdentity) {
  Rig rig;
  Tensor w1 = Tensor::matrix({{0.5, -1.0, 0.02}});
  Tensor w2 = Tensor::matrix({{-0.3, 2.0, 0.01}});
  Tensor w12 = Tensor::matrix({{0.2, 1.0, 0.03}});
  auto e1 = rig.fdm.encode_actual(w1, fd::RunMode::training).embedding.value();
  auto e2 = rig.fdm.encode_actual(w2, fd::RunMode::training).embedding.value();
  auto e12 = rig.fdm.encode_actual(w12, fd::RunMode::training).embedding.value();
  const auto& bias = rig.fdm.actual_encoder().bias->value();
  for (std::size_t i = 0; i < e1.size(); ++i) EXPECT_NEAR(e12[i] - e1[i] - e2[i], -bias[i], 1e-12);
}

TEST(ActualBranch, UnavailableInSensorFreeMode) {
  Rig rig;
  EXPECT_THROW(rig.fdm.encode_actual(Tensor({1, 3}), fd::RunMode::sensor_free_inference), fd::ModeError);
}

TEST(Decoder, ZeroTokenZeroBiasGivesZeroWrench) {
  Rig rig;
  rig.fdm.force_decoder().bias->value().fill(0);
  fd::ForceToken t{ad::Var::constant(Tensor({1, rig.config.hidden_dim})), fd::ForceKind::actual, 1};
  auto out = rig.fdm.decode(t);
  EXPECT_EQ(out.value(), Tensor({1, 3}));
}

TEST(Decoder, RejectsPredictedTokens) {
  Rig rig;
  auto pred = rig.fdm.predict(rig.vision_block(1, 1), rig.state_block(1, 2));
  EXPECT_THROW(rig.fdm.decode(pred), fd::ContractError);
}

TEST(DistillLoss, Examples) {
  const std::size_t D = 8;
  Tensor a({1, D}), b({1, D});
  a[0] = 1;
  b[1] = 1;
  fd::ForceToken pa{ad::Var::constant(a), fd::ForceKind::predicted, 1};
  fd::ForceToken aa{ad::Var::constant(a), fd::ForceKind::actual, 1};
  fd::ForceToken ab{ad::Var::constant(b), fd::ForceKind::actual, 1};
  EXPECT_EQ(fd::distill_loss(pa, aa).item(), 0.0);
  EXPECT_EQ(fd::distill_loss(pa, ab).item(), 2.0);
  EXPECT_THROW(fd::distill_loss(aa, pa), fd::ContractError);
}

TEST(DistillLoss, MatchesSumOfSquares) {
  fd::RngStream r(12);
  Tensor a = r.normal_tensor({2, 64}), b = r.normal_tensor({2, 64});
  double want = 0;
  for (std::size_t i = 0; i < a.size(); ++i) want += (a[i] - b[i]) * (a[i] - b[i]);
  fd::ForceToken pa{ad::Var::constant(a), fd::ForceKind::predicted, 2};
  fd::ForceToken ab{ad::Var::constant(b), fd::ForceKind::actual, 2};
  EXPECT_NEAR(fd::distill_loss(pa, ab).item(), want, 1e-12);
}

TEST(Gradients, DistillReachesBothBranchesReconOnlyActual) {
  Rig rig;
  auto vision = rig.vision_block(2, 1);
  auto state = rig.state_block(2, 2);
  Tensor wrench = Tensor::matrix({{0.1, -1.2, 0.01}, {0.0, 0.4, -0.02}});

  rig.store.zero_grad();
  auto pred = rig.fdm.predict(vision, state);
  auto actual = rig.fdm.encode_actual(wrench, fd::RunMode::training);
  fd::distill_loss(pred, actual).backward();
  for (const char* name : {"fdm.query", "fdm.attn.q.weight", "fdm.attn.o.weight", "fdm.ffn.up.weight",
                           "fdm.ffn.down.weight", "fdm.actual_encoder.weight"}) {
    auto p = rig.store.find(name);
    ASSERT_TRUE(p) << name;
    ASSERT_TRUE(p->has_grad()) << name;
    double n = 0;
    for (auto g : p->grad().storage()) n += g * g;
    EXPECT_GT(n, 0.0) << name;
  }

  rig.store.zero_grad();
  auto actual2 = rig.fdm.encode_actual(wrench, fd::RunMode::training);
  ad::squared_l2(rig.fdm.decode(actual2), ad::Var::constant(wrench)).backward();
  for (const auto& [name, p] : rig.store.all()) {
    const bool actual_branch = name.rfind("fdm.actual_encoder", 0) == 0 || name.rfind("fdm.force_decoder", 0) == 0;
    double n = 0;
    if (p->has_grad())
      for (auto g : p->grad().storage()) n += g * g;
    if (actual_branch)
      EXPECT_GT(n, 0.0) << name;
    else
      EXPECT_EQ(n, 0.0) << name;
  }
}
