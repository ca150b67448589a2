// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forcedistill/common/model_config.hpp"
#include "forcedistill/numerics/layers.hpp"

namespace forcedistill {

enum class Modality { vision, language, state, force };

const char* modality_name(Modality m);

/// Channel-first image, values in [0, 1].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Real> pixels;

  Real& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  Real at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  friend bool operator==(const Image&, const Image&) = default;
};

/// One observation. `force` is absent in sensor-free operation.
struct ModalityBundle {
  std::string language;
  Image vision;
  std::vector<Real> state;
  std::optional<std::vector<Real>> force;

  // Throws InputError when values are out of range or non-finite.
  void validate() const;
};

/// Tokens for one modality across a batch: `tokens` has batch * count rows of
/// width D, sample-major.
struct TokenBlock {
  ad::Var tokens;
  Modality modality = Modality::vision;
  std::size_t count = 0;
  std::size_t batch = 0;

  std::size_t width() const { return tokens.cols(); }
};

/// Patch-projection vision encoder with fixed sinusoidal patch positions.
class VisionEncoder {
 public:
  VisionEncoder(ParameterStore& store, const ModelConfig& config, RngStream& rng, bool trainable = true);

  std::size_t token_count() const noexcept { return tokens_; }
  const Tensor& position_encoding() const noexcept { return positions_; }
  const Linear& projection() const noexcept { return projection_; }

  // [batch x C*H*W] pixel rows -> [batch*N_v x C*P*P] patch rows, patch-major
  // in raster order.
  Tensor patchify(const Tensor& images) const;
  TokenBlock encode(const Tensor& images) const;
  TokenBlock encode(const Image& image) const;

 private:
  ModelConfig config_;
  std::size_t tokens_;
  Linear projection_;
  Tensor positions_;
};

/// Whitespace tokenizer hashed into a fixed vocabulary, then a learned
/// embedding table plus fixed positions.
class LanguageEncoder {
 public:
  LanguageEncoder(ParameterStore& store, const ModelConfig& config, RngStream& rng, bool trainable = true);

  static std::vector<std::string> split_words(std::string_view text);
  std::size_t bucket(std::string_view word) const;
  std::vector<std::size_t> token_ids(std::string_view instruction) const;

  // Every instruction in the batch must have the same word count.
  TokenBlock encode(std::span<const std::string> instructions) const;
  TokenBlock encode(const std::string& instruction) const;
  TokenBlock encode_ids(const std::vector<std::size_t>& ids, std::size_t batch) const;

  const ParameterPtr& table() const noexcept { return table_; }

 private:
  std::size_t vocab_;
  std::size_t width_;
  ParameterPtr table_;
};

/// Single linear layer from the proprioceptive state to one token.
class StateEncoder {
 public:
  StateEncoder(ParameterStore& store, const ModelConfig& config, RngStream& rng, bool trainable = true);

  // [batch x d_s] -> batch tokens.
  TokenBlock encode(const Tensor& states) const;
  TokenBlock encode(std::span<const Real> state) const;
  const Linear& projection() const noexcept { return projection_; }

 private:
  std::size_t state_dim_;
  Linear projection_;
};

}  // namespace forcedistill
