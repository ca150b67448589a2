// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <vector>

#include "forcedistill/common/error.hpp"
#include "forcedistill/fusion/fusion.hpp"

namespace fd = forcedistill;
namespace ad = fd::ad;
using fd::Real;
using fd::Tensor;

namespace {

fd::TokenBlock block(fd::Modality m, std::size_t count, std::size_t batch, std::size_t width, fd::RngStream& rng) {
  return {ad::Var::constant(rng.normal_tensor({batch * count, width})), m, count, batch};
}

fd::ModelConfig small_config() {
  fd::ModelConfig c;
  c.hidden_dim = 16;
  c.heads = 4;
  return c;
}

std::vector<std::vector<int>> rows_of(const fd::DirectionalMask& m) {
  std::vector<std::vector<int>> out(m.size(), std::vector<int>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j) out[i][j] = m.allowed(i, j);
  return out;
}

}  // namespace

TEST(Concat, DefaultCountsGiveTwentyOneTokens) {
  fd::RngStream rng(1);
  std::vector<fd::TokenBlock> blocks{block(fd::Modality::vision, 16, 1, 64, rng),
                                     block(fd::Modality::language, 3, 1, 64, rng),
                                     block(fd::Modality::state, 1, 1, 64, rng), block(fd::Modality::force, 1, 1, 64, rng)};
  auto fused = fd::concat_fused(blocks);
  EXPECT_EQ(fused.layout.total(), 21u);
  EXPECT_EQ(fused.tokens.rows(), 21u);
  EXPECT_EQ(fused.layout.force_index(), 20u);
  for (std::size_t c = 0; c < 64; ++c) EXPECT_EQ(fused.tokens.value().at(20, c), blocks[3].tokens.value().at(0, c));
}

TEST(Concat, OutOfOrderBlocksRejected) {
  fd::RngStream rng(1);
  std::vector<fd::TokenBlock> blocks{block(fd::Modality::language, 3, 1, 8, rng), block(fd::Modality::vision, 4, 1, 8, rng),
                                     block(fd::Modality::state, 1, 1, 8, rng)};
  EXPECT_THROW(fd::concat_fused(blocks), fd::ConfigError);
}

TEST(Concat, WidthMismatchRejected) {
  fd::RngStream rng(1);
  std::vector<fd::TokenBlock> blocks{block(fd::Modality::vision, 4, 1, 8, rng), block(fd::Modality::language, 3, 1, 6, rng),
                                     block(fd::Modality::state, 1, 1, 8, rng)};
  EXPECT_THROW(fd::concat_fused(blocks), fd::DimensionError);
}

TEST(Mask, SmallLayoutExample) {
  auto m = fd::build_directional_mask({2, 1, 1, 1});
  std::vector<std::vector<int>> want{
      {1, 1, 1, 0, 0}, {1, 1, 1, 0, 0}, {1, 1, 1, 0, 0}, {1, 1, 1, 1, 0}, {1, 1, 1, 1, 1}};
  EXPECT_EQ(rows_of(m), want);
}

TEST(Mask, AllPerceptualIsAllOnes) {
  auto m = fd::build_directional_mask({3, 2, 0, 0});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_TRUE(m.allowed(i, j));
}

TEST(Mask, AllControlIsLowerTriangular) {
  auto m = fd::build_directional_mask({0, 0, 3, 1});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(m.allowed(i, j), i >= j);
}

TEST(Mask, StructuralInvariantsForAllSmallLayouts) {
  for (std::size_t v = 0; v <= 3; ++v)
    for (std::size_t l = 0; l <= 3; ++l)
      for (std::size_t s = 0; s <= 2; ++s)
        for (std::size_t f = 0; f <= 2; ++f) {
          fd::StreamLayout layout{v, l, s, f};
          if (layout.total() == 0) continue;
          auto m = fd::build_directional_mask(layout);
          EXPECT_EQ(m, fd::build_directional_mask(layout));
          for (std::size_t i = 0; i < layout.total(); ++i) {
            bool any = false;
            for (std::size_t j = 0; j < layout.total(); ++j) {
              any = any || m.allowed(i, j);
              if (!layout.is_control(i) && layout.is_control(j)) {
                EXPECT_FALSE(m.allowed(i, j));
              }
            }
            EXPECT_TRUE(any);
          }
        }
}

TEST(MaskedAttention, AllOnesMaskMatchesUnmaskedAttention) {
  auto c = small_config();
  fd::ParameterStore store;
  fd::RngStream rng(5);
  auto layer = fd::TransformerLayer::create(store, "t", c, rng, true);
  auto x = ad::Var::constant(rng.normal_tensor({6, 16}));
  auto masked = fd::masked_self_attention(x, 1, fd::DirectionalMask(6, 1), layer);
  auto h = layer.attn_norm(x);
  ad::AttentionOptions opt;
  opt.query_rows = 6;
  opt.key_rows = 6;
  opt.heads = 4;
  auto dense = ad::add(x, layer.o(ad::attention(layer.q(h), layer.k(h), layer.v(h), opt)));
  for (std::size_t i = 0; i < dense.value().size(); ++i) EXPECT_NEAR(masked.value()[i], dense.value()[i], 1e-12);
}

TEST(MaskedAttention, SinglePermittedColumnCopiesItsValue) {
  auto c = small_config();
  fd::ParameterStore store;
  fd::RngStream rng(6);
  auto layer = fd::TransformerLayer::create(store, "t", c, rng, true);
  auto x = ad::Var::constant(rng.normal_tensor({4, 16}));
  fd::DirectionalMask mask(4, 1);
  for (std::size_t j = 0; j < 4; ++j) mask.set(2, j, j == 0);
  auto out = fd::masked_self_attention(x, 1, mask, layer).value();
  auto v0 = layer.o(layer.v(layer.attn_norm(ad::slice_rows(x, 0, 1)))).value();
  for (std::size_t col = 0; col < 16; ++col)
    EXPECT_NEAR(out.at(2, col), x.value().at(2, col) + v0[col], 1e-12);
}

TEST(MaskedAttention, EmptyMaskRowIsAConfigError) {
  auto c = small_config();
  fd::ParameterStore store;
  fd::RngStream rng(6);
  auto layer = fd::TransformerLayer::create(store, "t", c, rng, true);
  auto x = ad::Var::constant(rng.normal_tensor({3, 16}));
  fd::DirectionalMask mask(3, 1);
  for (std::size_t j = 0; j < 3; ++j) mask.set(1, j, false);
  EXPECT_THROW(fd::masked_self_attention(x, 1, mask, layer), fd::ConfigError);
}

TEST(Stack, ZeroUsedLayersIsIdentity) {
  auto c = small_config();
  c.frozen_layers_used = 0;
  fd::ParameterStore store;
  fd::RngStream rng(2);
  fd::FrozenStack stack(store, c, rng);
  std::vector<fd::TokenBlock> blocks{block(fd::Modality::vision, 4, 1, 16, rng), block(fd::Modality::language, 2, 1, 16, rng),
                                     block(fd::Modality::state, 1, 1, 16, rng)};
  auto fused = fd::concat_fused(blocks);
  EXPECT_EQ(stack.forward(fused).value(), fused.tokens.value());
}

TEST(Stack, ParametersAreFrozen) {
  auto c = small_config();
  fd::ParameterStore store;
  fd::RngStream rng(2);
  fd::FrozenStack stack(store, c, rng);
  EXPECT_EQ(stack.total_layers(), 4u);
  EXPECT_EQ(stack.used_layers(), 2u);
  EXPECT_FALSE(store.all().empty());
  for (const auto& [name, p] : store.all()) EXPECT_FALSE(p->trainable()) << name;
  EXPECT_TRUE(store.trainable().empty());
}

class OneWayFlow : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(OneWayFlow, PerceptualRowsIgnoreControlTokens) {
  auto c = small_config();
  fd::ParameterStore store;
  fd::RngStream rng(GetParam());
  fd::FrozenStack stack(store, c, rng);
  const std::size_t batch = 2;
  auto vision = block(fd::Modality::vision, 5, batch, 16, rng);
  auto language = block(fd::Modality::language, 3, batch, 16, rng);
  auto state = block(fd::Modality::state, 1, batch, 16, rng);
  auto force_a = block(fd::Modality::force, 1, batch, 16, rng);
  auto force_b = block(fd::Modality::force, 1, batch, 16, rng);

  std::vector<fd::TokenBlock> percept_only{vision, language};
  auto alone = stack.forward(fd::concat_fused(percept_only)).value();
  std::vector<fd::TokenBlock> full_a{vision, language, state, force_a};
  std::vector<fd::TokenBlock> full_b{vision, language, state, force_b};
  auto out_a = stack.forward(fd::concat_fused(full_a)).value();
  auto out_b = stack.forward(fd::concat_fused(full_b)).value();

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t col = 0; col < 16; ++col) {
        EXPECT_EQ(out_a.at(b * 10 + r, col), alone.at(b * 8 + r, col));
        EXPECT_EQ(out_b.at(b * 10 + r, col), alone.at(b * 8 + r, col));
      }
    // state row does not see the force token
    for (std::size_t col = 0; col < 16; ++col) EXPECT_EQ(out_a.at(b * 10 + 8, col), out_b.at(b * 10 + 8, col));
  }
}

TEST_P(OneWayFlow, ControlRowsDependOnPerception) {
  auto c = small_config();
  fd::ParameterStore store;
  fd::RngStream rng(GetParam() + 1000);
  fd::FrozenStack stack(store, c, rng);
  auto vision = block(fd::Modality::vision, 4, 1, 16, rng);
  auto vision2 = block(fd::Modality::vision, 4, 1, 16, rng);
  auto language = block(fd::Modality::language, 2, 1, 16, rng);
  auto state = block(fd::Modality::state, 1, 1, 16, rng);
  auto force = block(fd::Modality::force, 1, 1, 16, rng);
  std::vector<fd::TokenBlock> a{vision, language, state, force}, b{vision2, language, state, force};
  auto oa = stack.forward(fd::concat_fused(a)).value();
  auto ob = stack.forward(fd::concat_fused(b)).value();
  double diff = 0;
  for (std::size_t col = 0; col < 16; ++col) diff += std::abs(oa.at(7, col) - ob.at(7, col));
  EXPECT_GT(diff, 0.0);
}

INSTANTIATE_TEST_SUITE_P(Seeds, OneWayFlow, ::testing::Values(1, 2, 3, 4, 5));

TEST(Stack, DigestIsStableAndSensitive) {
  auto c = small_config();
  fd::ParameterStore store;
  fd::RngStream rng(2);
  fd::FrozenStack stack(store, c, rng);
  const auto d0 = stack.digest(store);
  EXPECT_EQ(d0, stack.digest(store));
  EXPECT_EQ(d0.size(), 64u);
  store.find("vlm.layer0.attn.q.weight")->value()[0] += 1e-12;
  EXPECT_NE(d0, stack.digest(store));
}
