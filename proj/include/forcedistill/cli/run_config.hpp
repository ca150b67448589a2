// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "forcedistill/contactsim/world.hpp"
#include "forcedistill/trainer/trainer.hpp"

namespace forcedistill {

// Flat YAML run description. Every key is optional; unknown keys are errors.
struct RunConfig {
  std::vector<sim::Task> tasks{sim::kAllTasks.begin(), sim::kAllTasks.end()};
  TrainConfig train;
  std::filesystem::path dataset;     // default <output root>/data
  std::filesystem::path output_dir;  // default <output root>/<variant>_seed<seed>
  std::size_t eval_episodes = 100;  // per task; 0 skips evaluation after training
  std::uint64_t eval_seed = 1000;
  std::vector<std::uint64_t> ablation_seeds{0, 1, 2};
  std::string source_text;  // the file exactly as read
};

inline constexpr const char* kOutputRootEnv = "FORCEDISTILL_OUTPUT_ROOT";

// $FORCEDISTILL_OUTPUT_ROOT, or ./runs when unset.
std::filesystem::path output_root();

// `overrides` replace top-level keys before validation; `source_text` keeps
// the text as given.
RunConfig parse_run_config(const std::string& yaml_text,
                           const std::vector<std::pair<std::string, std::string>>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, std::string>>& overrides = {});

// Every key with its effective value; parsing it yields the same RunConfig.
std::string resolved_yaml(const RunConfig& config);

// Keeps the episodes whose task is listed in `tasks`.
sim::Dataset filter_tasks(sim::Dataset dataset, const std::vector<sim::Task>& tasks);

}  // namespace forcedistill
