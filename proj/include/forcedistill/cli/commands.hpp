// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "forcedistill/cli/run_config.hpp"
#include "forcedistill/cli/verify.hpp"

namespace forcedistill::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3 };

struct GenDataArgs {
  std::string task = "all";  // a task name or "all"
  std::size_t count = 50;    // per task
  std::uint64_t seed = 7;
  std::filesystem::path out;  // default <output root>/data
};

struct TrainArgs {
  std::filesystem::path config;
  std::optional<std::string> variant;  // overrides the config
  std::optional<long> steps;
  bool resume = false;
};

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::string task = "wipe";
  std::size_t episodes = 100;
  std::uint64_t seed = 1000;
  std::optional<int> sampler_steps;
};

struct AblateArgs {
  std::filesystem::path config;
  std::optional<std::size_t> episodes;
  std::optional<std::vector<std::uint64_t>> seeds;
};

struct InspectArgs {
  std::filesystem::path checkpoint;
  std::uint64_t seed = 0;
  std::string task = "wipe";
  std::filesystem::path out;  // default: next to the checkpoint
};

int cmd_gen_data(const GenDataArgs& args, std::ostream& out);
int cmd_train(const TrainArgs& args, std::ostream& out);
int cmd_eval(const EvalArgs& args, std::ostream& out);
int cmd_ablate(const AblateArgs& args, std::ostream& out);
int cmd_verify(const VerifyOptions& options, std::ostream& out);
int cmd_inspect(const InspectArgs& args, std::ostream& out);

// Runs `command`, mapping library errors to exit codes and printing the
// message to `err`.
int guarded(const std::function<int()>& command, std::ostream& err);
int exit_code_for(const std::exception& e);

}  // namespace forcedistill::cli
