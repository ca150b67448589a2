// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "forcedistill/common/model_config.hpp"
#include "forcedistill/fusion/fusion.hpp"

namespace forcedistill {

struct SuiteResult {
  std::string name;
  bool passed = false;
  Real max_error = 0;  // suite-specific: relative gradient error, mismatches, or absolute deviation
  std::string detail;
  double seconds = 0;
};

struct VerifyOptions {
  // Toggle one entry (row, column) of the directional mask used by the
  // one-way-flow suite, to show that the suite notices.
  std::optional<std::pair<std::size_t, std::size_t>> flip_mask_bit;
  std::size_t flow_trials = 100;
  std::uint64_t seed = 0;
};

// Tiny model sizes that keep a full finite-difference sweep fast.
ModelConfig gradcheck_config();

SuiteResult verify_gradients_embedding();
SuiteResult verify_gradients_fdm();
SuiteResult verify_gradients_fusion();
SuiteResult verify_gradients_policy();
SuiteResult verify_gradients_full_loss();

// Reference mask written from the stream definitions, independent of
// build_directional_mask.
bool reference_mask_allows(const StreamLayout& layout, std::size_t i, std::size_t j);
// Every layout in fixed order with 1 <= total <= max_tokens.
std::vector<StreamLayout> enumerate_layouts(std::size_t max_tokens);
SuiteResult verify_masks(std::size_t max_tokens = 8);

SuiteResult verify_one_way_flow(const VerifyOptions& options);
SuiteResult verify_flow_oracle();

std::vector<SuiteResult> run_verify(const VerifyOptions& options = {});
std::string format_suite(const SuiteResult& result);

}  // namespace forcedistill
