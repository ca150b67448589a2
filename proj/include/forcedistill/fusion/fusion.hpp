// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "forcedistill/embedding/encoders.hpp"

namespace forcedistill {

/// Token counts of the fused sequence, always ordered
/// [vision, language, state, force]. Vision and language form the perceptual
/// stream; state and force form the control stream.
struct StreamLayout {
  std::size_t vision = 0;
  std::size_t language = 0;
  std::size_t state = 0;
  std::size_t force = 0;

  std::size_t total() const noexcept { return vision + language + state + force; }
  std::size_t perceptual() const noexcept { return vision + language; }
  std::size_t control() const noexcept { return state + force; }
  bool is_control(std::size_t index) const noexcept { return index >= perceptual(); }
  std::size_t force_index() const noexcept { return vision + language + state; }

  friend bool operator==(const StreamLayout&, const StreamLayout&) = default;
};

struct FusedSequence {
  ad::Var tokens;  // [batch * N_tot x D]
  StreamLayout layout;
  std::size_t batch = 0;
};

// Concatenates blocks per sample. Blocks must arrive in the fixed modality
// order; trailing control blocks may be left out (N_force = 0, or a purely
// perceptual sequence).
FusedSequence concat_fused(std::span<const TokenBlock> blocks);

/// Binary permission matrix; allowed(i, j) means token i may attend to j.
class DirectionalMask {
 public:
  DirectionalMask() = default;
  explicit DirectionalMask(std::size_t size, std::uint8_t fill = 0);

  std::size_t size() const noexcept { return size_; }
  bool allowed(std::size_t i, std::size_t j) const { return bits_[i * size_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool allowed) { bits_[i * size_ + j] = allowed ? 1 : 0; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
  std::string to_string() const;

  friend bool operator==(const DirectionalMask&, const DirectionalMask&) = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint8_t> bits_;
};

DirectionalMask build_directional_mask(const StreamLayout& layout);

/// Pre-LN transformer block.
struct TransformerLayer {
  LayerNorm attn_norm;
  Linear q, k, v, o;
  LayerNorm ffn_norm;
  FeedForward ffn;
  std::size_t heads = 1;

  static TransformerLayer create(ParameterStore& store, const std::string& name, const ModelConfig& config,
                                 RngStream& rng, bool trainable);
};

// x + O(Attention(LN(x)) under the mask), per sample of the batch.
ad::Var masked_self_attention(const ad::Var& x, std::size_t batch, const DirectionalMask& mask,
                              const TransformerLayer& layer, std::vector<Real>* weights_out = nullptr);
// Attention sublayer followed by the FFN sublayer.
ad::Var transformer_block(const ad::Var& x, std::size_t batch, const DirectionalMask& mask,
                          const TransformerLayer& layer);

/// Randomly initialized, permanently frozen stand-in for the pretrained
/// backbone. Only the first `used` layers run.
class FrozenStack {
 public:
  FrozenStack(ParameterStore& store, const ModelConfig& config, RngStream& rng);

  std::size_t total_layers() const noexcept { return layers_.size(); }
  std::size_t used_layers() const noexcept { return used_; }
  const std::vector<TransformerLayer>& layers() const noexcept { return layers_; }

  ad::Var forward(const FusedSequence& fused) const;
  ad::Var forward(const FusedSequence& fused, const DirectionalMask& mask) const;

  // SHA-256 over every stack parameter (name and raw bytes), hex encoded.
  std::string digest(const ParameterStore& store) const;

 private:
  std::vector<TransformerLayer> layers_;
  std::size_t used_;
};

inline constexpr const char* kFrozenPrefix = "vlm.";

}  // namespace forcedistill
