// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "forcedistill/cli/commands.hpp"

namespace cli = forcedistill::cli;

namespace {

std::pair<std::size_t, std::size_t> parse_bit(const std::string& text) {
  std::size_t i = 0, j = 0;
  char comma = 0;
  std::istringstream in(text);
  if (!(in >> i >> comma >> j) || comma != ',') throw CLI::ValidationError("--flip-mask-bit", "expected ROW,COL");
  return {i, j};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forcedistill: force-distilled action policies on a planar contact simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "forcedistill 0.1.0");

  cli::GenDataArgs gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate scripted expert demonstrations");
  gen_cmd->add_option("--task", gen.task, "wipe, press, insert or all")->capture_default_str();
  gen_cmd->add_option("--count", gen.count, "successful episodes per task")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "dataset seed")->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "output directory (default $FORCEDISTILL_OUTPUT_ROOT/data)");

  cli::TrainArgs train;
  std::string train_config, train_variant;
  long train_steps = -1;
  auto* train_cmd = app.add_subcommand("train", "train a policy from a run config");
  train_cmd->add_option("--config", train_config, "YAML run config")->required();
  train_cmd->add_option("--variant", train_variant, "override the config variant");
  train_cmd->add_option("--steps", train_steps, "override the config step budget");
  train_cmd->add_flag("--resume", train.resume, "continue from output_dir/checkpoint.bin if present");

  cli::EvalArgs eval;
  std::string eval_ckpt;
  int eval_sampler = 0;
  auto* eval_cmd = app.add_subcommand("eval", "closed-loop evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--task", eval.task, "wipe, press or insert")->capture_default_str();
  eval_cmd->add_option("--episodes", eval.episodes, "number of episodes")->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "evaluation seed")->capture_default_str();
  eval_cmd->add_option("--sampler-steps", eval_sampler, "Euler steps (default: from the checkpoint)");

  cli::AblateArgs ablate;
  std::string ablate_config;
  std::size_t ablate_episodes = 0;
  std::vector<std::uint64_t> ablate_seeds;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate every force variant");
  ablate_cmd->add_option("--config", ablate_config, "YAML run config")->required();
  ablate_cmd->add_option("--episodes", ablate_episodes, "evaluation episodes per task");
  ablate_cmd->add_option("--seeds", ablate_seeds, "training seeds")->delimiter(',');

  forcedistill::VerifyOptions verify;
  std::string flip;
  auto* verify_cmd = app.add_subcommand("verify", "run the invariant suites");
  verify_cmd->add_option("--flip-mask-bit", flip, "fault injection: toggle mask entry ROW,COL");
  verify_cmd->add_option("--seed", verify.seed, "seed for randomized suites")->capture_default_str();

  cli::InspectArgs inspect;
  std::string inspect_ckpt, inspect_out;
  auto* inspect_cmd = app.add_subcommand("inspect", "dump the attention mask and FDM attention weights");
  inspect_cmd->add_option("--checkpoint", inspect_ckpt, "checkpoint file")->required();
  inspect_cmd->add_option("--seed", inspect.seed, "episode seed")->capture_default_str();
  inspect_cmd->add_option("--task", inspect.task, "wipe, press or insert")->capture_default_str();
  inspect_cmd->add_option("--out", inspect_out, "output directory (default: next to the checkpoint)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kUsage;
  }

  return cli::guarded(
      [&]() -> int {
        if (*gen_cmd) {
          gen.out = gen_out;
          return cli::cmd_gen_data(gen, std::cout);
        }
        if (*train_cmd) {
          train.config = train_config;
          if (!train_variant.empty()) train.variant = train_variant;
          if (train_steps >= 0) train.steps = train_steps;
          return cli::cmd_train(train, std::cout);
        }
        if (*eval_cmd) {
          eval.checkpoint = eval_ckpt;
          if (eval_sampler > 0) eval.sampler_steps = eval_sampler;
          return cli::cmd_eval(eval, std::cout);
        }
        if (*ablate_cmd) {
          ablate.config = ablate_config;
          if (ablate_episodes > 0) ablate.episodes = ablate_episodes;
          if (!ablate_seeds.empty()) ablate.seeds = ablate_seeds;
          return cli::cmd_ablate(ablate, std::cout);
        }
        if (*verify_cmd) {
          if (!flip.empty()) verify.flip_mask_bit = parse_bit(flip);
          return cli::cmd_verify(verify, std::cout);
        }
        inspect.checkpoint = inspect_ckpt;
        inspect.out = inspect_out;
        return cli::cmd_inspect(inspect, std::cout);
      },
      std::cerr);
}
