// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/embedding/encoders.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include "forcedistill/common/error.hpp"

namespace forcedistill {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::vision: return "vision";
    case Modality::language: return "language";
    case Modality::state: return "state";
    case Modality::force: return "force";
  }
  return "unknown";
}

void ModalityBundle::validate() const {
  if (language.empty()) throw InputError("observation: empty instruction");
  if (vision.pixels.size() != vision.channels * vision.height * vision.width)
    throw InputError("observation: image buffer does not match its dimensions");
  for (auto v : vision.pixels)
    if (!(v >= 0 && v <= 1)) throw InputError("observation: pixel outside [0, 1]");
  for (auto v : state)
    if (!std::isfinite(v)) throw InputError("observation: non-finite state");
  if (force)
    for (auto v : *force)
      if (!std::isfinite(v)) throw InputError("observation: non-finite force");
}

VisionEncoder::VisionEncoder(ParameterStore& store, const ModelConfig& config, RngStream& rng, bool trainable)
    : config_(config) {
  config_.validate();
  tokens_ = config_.vision_tokens();
  const std::size_t patch_values = config_.image_channels * config_.patch_size * config_.patch_size;
  projection_ = Linear::create(store, "embed.vision", patch_values, config_.hidden_dim, rng, trainable);
  positions_ = sinusoidal_encoding(tokens_, config_.hidden_dim);
}

Tensor VisionEncoder::patchify(const Tensor& images) const {
  const std::size_t C = config_.image_channels, S = config_.image_size, P = config_.patch_size;
  if (images.cols() != C * S * S) {
    throw ConfigError("vision encoder expects " + std::to_string(C) + "x" + std::to_string(S) + "x" +
                      std::to_string(S) + " images, got rows of " + std::to_string(images.cols()) + " values");
  }
  const std::size_t batch = images.rows(), side = S / P, pv = C * P * P;
  Tensor patches({batch * tokens_, pv});
  for (std::size_t b = 0; b < batch; ++b) {
    const Real* img = images.data().data() + b * C * S * S;
    for (std::size_t py = 0; py < side; ++py)
      for (std::size_t px = 0; px < side; ++px) {
        auto row = patches.row(b * tokens_ + py * side + px);
        std::size_t idx = 0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t y = 0; y < P; ++y)
            for (std::size_t x = 0; x < P; ++x) row[idx++] = img[(c * S + py * P + y) * S + px * P + x];
      }
  }
  return patches;
}

TokenBlock VisionEncoder::encode(const Tensor& images) const {
  const std::size_t batch = images.rows();
  ad::Var projected = projection_(ad::Var::constant(patchify(images)));
  ad::Var pos = ad::tile_rows(ad::Var::constant(positions_), batch);
  return {ad::add(projected, pos), Modality::vision, tokens_, batch};
}

TokenBlock VisionEncoder::encode(const Image& image) const {
  if (image.channels != config_.image_channels || image.height != config_.image_size ||
      image.width != config_.image_size) {
    throw ConfigError("vision encoder: image is " + std::to_string(image.channels) + "x" +
                      std::to_string(image.height) + "x" + std::to_string(image.width) + ", expected " +
                      std::to_string(config_.image_channels) + "x" + std::to_string(config_.image_size) + "x" +
                      std::to_string(config_.image_size));
  }
  return encode(Tensor({1, image.pixels.size()}, image.pixels));
}

LanguageEncoder::LanguageEncoder(ParameterStore& store, const ModelConfig& config, RngStream& rng, bool trainable)
    : vocab_(config.vocab_size), width_(config.hidden_dim) {
  table_ = store.normal("embed.language.table", {vocab_, width_}, Real(1) / std::sqrt(Real(width_)), rng, trainable);
}

std::vector<std::string> LanguageEncoder::split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) {
    for (auto& ch : w) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    words.push_back(std::move(w));
  }
  return words;
}

std::size_t LanguageEncoder::bucket(std::string_view word) const {
  // 64-bit FNV-1a.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : word) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(h % vocab_);
}

std::vector<std::size_t> LanguageEncoder::token_ids(std::string_view instruction) const {
  auto words = split_words(instruction);
  if (words.empty()) throw InputError("language encoder: empty instruction");
  std::vector<std::size_t> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(bucket(w));
  return ids;
}

TokenBlock LanguageEncoder::encode_ids(const std::vector<std::size_t>& ids, std::size_t batch) const {
  if (batch == 0 || ids.empty() || ids.size() % batch != 0)
    throw DimensionError("language encoder: token ids not divisible into the batch");
  const std::size_t count = ids.size() / batch;
  ad::Var rows = ad::gather_rows(table_->var(), ids);
  ad::Var pos = ad::tile_rows(ad::Var::constant(sinusoidal_encoding(count, width_)), batch);
  return {ad::add(rows, pos), Modality::language, count, batch};
}

TokenBlock LanguageEncoder::encode(std::span<const std::string> instructions) const {
  if (instructions.empty()) throw InputError("language encoder: empty batch");
  std::vector<std::size_t> all;
  std::size_t count = 0;
  for (const auto& s : instructions) {
    auto ids = token_ids(s);
    if (count == 0) count = ids.size();
    if (ids.size() != count) throw DimensionError("language encoder: instructions in a batch differ in length");
    all.insert(all.end(), ids.begin(), ids.end());
  }
  return encode_ids(all, instructions.size());
}

TokenBlock LanguageEncoder::encode(const std::string& instruction) const {
  return encode(std::span<const std::string>(&instruction, 1));
}

StateEncoder::StateEncoder(ParameterStore& store, const ModelConfig& config, RngStream& rng, bool trainable)
    : state_dim_(config.state_dim),
      projection_(Linear::create(store, "embed.state", config.state_dim, config.hidden_dim, rng, trainable)) {}

TokenBlock StateEncoder::encode(const Tensor& states) const {
  if (states.cols() != state_dim_) {
    throw DimensionError("state encoder expects length " + std::to_string(state_dim_) + ", got " +
                         std::to_string(states.cols()));
  }
  return {projection_(ad::Var::constant(states)), Modality::state, 1, states.rows()};
}

TokenBlock StateEncoder::encode(std::span<const Real> state) const {
  if (state.empty()) throw DimensionError("state encoder: empty state");
  return encode(Tensor({1, state.size()}, std::vector<Real>(state.begin(), state.end())));
}

}  // namespace forcedistill
