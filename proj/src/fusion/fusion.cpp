// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/fusion/fusion.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <memory>
#include <sstream>

#include "forcedistill/common/error.hpp"

namespace forcedistill {

FusedSequence concat_fused(std::span<const TokenBlock> blocks) {
  static constexpr std::array kOrder{Modality::vision, Modality::language, Modality::state, Modality::force};
  if (blocks.size() < 2 || blocks.size() > 4)
    throw DimensionError("concat_fused: expected vision and language, then optionally state and force blocks");
  StreamLayout layout;
  std::vector<ad::Block> parts;
  const std::size_t batch = blocks.front().batch;
  const std::size_t width = blocks.front().width();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.modality != kOrder[i]) {
      throw ConfigError(std::string("concat_fused: block ") + std::to_string(i) + " is " + modality_name(b.modality) +
                        ", expected " + modality_name(kOrder[i]));
    }
    if (b.batch != batch) throw DimensionError("concat_fused: batch sizes differ");
    if (b.width() != width) {
      throw DimensionError(std::string("concat_fused: ") + modality_name(b.modality) + " width " +
                           std::to_string(b.width()) + " vs " + std::to_string(width));
    }
    switch (b.modality) {
      case Modality::vision: layout.vision = b.count; break;
      case Modality::language: layout.language = b.count; break;
      case Modality::state: layout.state = b.count; break;
      case Modality::force: layout.force = b.count; break;
    }
    parts.push_back({b.tokens, b.count});
  }
  return {ad::interleave(parts, batch), layout, batch};
}

DirectionalMask::DirectionalMask(std::size_t size, std::uint8_t fill) : size_(size), bits_(size * size, fill) {}

std::string DirectionalMask::to_string() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < size_; ++i) {
    for (std::size_t j = 0; j < size_; ++j) out << (j ? " " : "") << int(bits_[i * size_ + j]);
    out << '\n';
  }
  return out.str();
}

DirectionalMask build_directional_mask(const StreamLayout& layout) {
  const std::size_t n = layout.total();
  DirectionalMask mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool ci = layout.is_control(i), cj = layout.is_control(j);
      mask.set(i, j, !cj || (ci && i >= j));
    }
  }
  return mask;
}

TransformerLayer TransformerLayer::create(ParameterStore& store, const std::string& name, const ModelConfig& config,
                                          RngStream& rng, bool trainable) {
  const std::size_t D = config.hidden_dim;
  TransformerLayer layer;
  layer.attn_norm = LayerNorm::create(store, name + ".attn_norm", D, config.layernorm_eps, trainable);
  layer.q = Linear::create(store, name + ".attn.q", D, D, rng, trainable, false);
  layer.k = Linear::create(store, name + ".attn.k", D, D, rng, trainable, false);
  layer.v = Linear::create(store, name + ".attn.v", D, D, rng, trainable, false);
  layer.o = Linear::create(store, name + ".attn.o", D, D, rng, trainable, false);
  layer.ffn_norm = LayerNorm::create(store, name + ".ffn_norm", D, config.layernorm_eps, trainable);
  layer.ffn = FeedForward::create(store, name + ".ffn", D, config.ffn_dim(), rng, trainable);
  layer.heads = config.heads;
  return layer;
}

ad::Var masked_self_attention(const ad::Var& x, std::size_t batch, const DirectionalMask& mask,
                              const TransformerLayer& layer, std::vector<Real>* weights_out) {
  if (batch == 0 || x.rows() % batch != 0) throw DimensionError("masked_self_attention: rows not divisible by batch");
  const std::size_t n = x.rows() / batch;
  if (mask.size() != n) {
    throw DimensionError("masked_self_attention: mask is " + std::to_string(mask.size()) + "x" +
                         std::to_string(mask.size()) + " but sequence has " + std::to_string(n) + " tokens");
  }
  ad::Var h = layer.attn_norm(x);
  ad::AttentionOptions opt;
  opt.batch = batch;
  opt.query_rows = n;
  opt.key_rows = n;
  opt.heads = layer.heads;
  opt.mask = &mask.bits();
  opt.weights_out = weights_out;
  return ad::add(x, layer.o(ad::attention(layer.q(h), layer.k(h), layer.v(h), opt)));
}

ad::Var transformer_block(const ad::Var& x, std::size_t batch, const DirectionalMask& mask,
                          const TransformerLayer& layer) {
  ad::Var y = masked_self_attention(x, batch, mask, layer);
  return ad::add(y, layer.ffn(layer.ffn_norm(y)));
}

FrozenStack::FrozenStack(ParameterStore& store, const ModelConfig& config, RngStream& rng)
    : used_(config.frozen_layers_used) {
  config.validate();
  for (std::size_t i = 0; i < config.frozen_layers_total; ++i)
    layers_.push_back(TransformerLayer::create(store, std::string(kFrozenPrefix) + "layer" + std::to_string(i),
                                               config, rng, /*trainable=*/false));
}

ad::Var FrozenStack::forward(const FusedSequence& fused) const {
  return forward(fused, build_directional_mask(fused.layout));
}

ad::Var FrozenStack::forward(const FusedSequence& fused, const DirectionalMask& mask) const {
  ad::Var x = fused.tokens;
  for (std::size_t i = 0; i < used_; ++i) x = transformer_block(x, fused.batch, mask, layers_[i]);
  return x;
}

std::string FrozenStack::digest(const ParameterStore& store) const {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  for (const auto& p : store.with_prefix(kFrozenPrefix)) {
    EVP_DigestUpdate(ctx.get(), p->name().data(), p->name().size());
    const auto& data = p->value().storage();
    EVP_DigestUpdate(ctx.get(), data.data(), data.size() * sizeof(Real));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace forcedistill
