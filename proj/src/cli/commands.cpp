// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/cli/commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include "forcedistill/common/error.hpp"
#include "forcedistill/trainer/evaluate.hpp"
#include "json.hpp"

namespace forcedistill::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<sim::Task> tasks_from(const std::string& name) {
  if (name == "all") return {sim::kAllTasks.begin(), sim::kAllTasks.end()};
  return {sim::parse_task(name)};
}

std::string fmt(const char* format, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

std::string eval_line(const EvalResult& r) {
  return std::string(sim::task_name(r.task)) + ": success " +
         fmt("%.3f (%.0f/%.0f), 95%% CI [%.3f, ", double(r.rate), double(r.successes), double(r.episodes),
             double(r.ci.low)) +
         fmt("%.3f]", double(r.ci.high));
}

sim::Dataset load_training_data(const RunConfig& rc) {
  sim::Dataset ds = filter_tasks(sim::load_dataset(rc.dataset), rc.tasks);
  sim::audit(ds);
  return ds;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kIo;
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const DivergenceError*>(&e)) return kNumerical;
  return kUsage;
}

int guarded(const std::function<int()>& command, std::ostream& err) {
  try {
    return command();
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << " (step " << e.step() << ")\n";
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cmd_gen_data(const GenDataArgs& args, std::ostream& out) {
  if (args.count == 0) throw ConfigError("--count must be at least 1");
  const std::vector<sim::Task> tasks = tasks_from(args.task);
  const fs::path dir = args.out.empty() ? output_root() / "data" : args.out;
  const sim::Dataset ds = sim::generate_dataset(tasks, args.count, args.seed);
  sim::audit(ds);
  sim::save_dataset(ds, dir);
  out << "wrote " << ds.episodes.size() << " episodes (" << ds.total_steps() << " steps) to " << dir.string() << "\n";
  return kOk;
}

int cmd_train(const TrainArgs& args, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> overrides;
  if (args.variant) overrides.emplace_back("variant", *args.variant);
  if (args.steps) overrides.emplace_back("steps", std::to_string(*args.steps));
  const RunConfig rc = load_run_config(args.config, overrides);
  const sim::Dataset ds = load_training_data(rc);

  make_dirs(rc.output_dir);
  write_text(rc.output_dir / "config.yaml", rc.source_text);
  write_text(rc.output_dir / "resolved_config.yaml", resolved_yaml(rc));
  const fs::path ckpt = rc.output_dir / "checkpoint.bin";

  std::unique_ptr<TrainingState> state;
  const bool resuming = args.resume && fs::exists(ckpt);
  if (resuming) {
    state = load_checkpoint(ckpt);
    TrainConfig stored = state->config;
    stored.steps = rc.train.steps;
    if (!(stored == rc.train)) throw ConfigError("--resume: config differs from the checkpoint beyond 'steps'");
    if (state->step > rc.train.steps) throw ConfigError("--resume: checkpoint is already past 'steps'");
    state->config.steps = rc.train.steps;
    out << "resuming " << ckpt.string() << " at step " << state->step << "\n";
  } else {
    state = std::make_unique<TrainingState>(rc.train, sim::compute_stats(ds));
  }

  std::ofstream metrics(rc.output_dir / "metrics.jsonl", resuming ? std::ios::app : std::ios::trunc);
  if (!metrics) throw IoError("cannot write metrics in " + rc.output_dir.string());
  out << "variant " << variant_name(rc.train.variant) << ", " << ds.episodes.size() << " episodes, steps "
      << state->step << " -> " << rc.train.steps << "\n";
  out << "loss columns: total flow" << (has_distillation(rc.train.variant) ? " distill recon" : "") << "\n";
  const long every = std::max(1L, rc.train.steps / 20);
  const TrainReport report = train(*state, ds, [&](const StepLog& log) {
    metrics << metrics_line(log) << '\n';
    if (log.step % every == 0 || log.step == rc.train.steps) out << metrics_line(log) << "\n" << std::flush;
  });
  metrics.flush();
  save_checkpoint(*state, ckpt);

  nlohmann::ordered_json rep;
  rep["variant"] = variant_name(rc.train.variant);
  rep["final_step"] = report.final_step;
  rep["wall_seconds"] = report.wall_seconds;
  rep["frozen_digest"] = report.frozen_digest;
  rep["checkpoint"] = ckpt.string();
  if (!report.steps.empty()) rep["final_losses"] = nlohmann::json::parse(metrics_line(report.steps.back()));
  nlohmann::ordered_json evals = nlohmann::json::array();
  if (rc.eval_episodes > 0) {
    for (sim::Task t : rc.tasks) {
      const EvalResult r = evaluate(*state->model, state->stats, t, rc.eval_episodes, rc.eval_seed,
                                    rc.train.sampler_steps, ds.physics, ds.noise);
      out << eval_line(r) << "\n";
      evals.push_back(nlohmann::ordered_json::parse(r.summary_json()));
    }
  }
  rep["evaluation"] = evals;
  write_text(rc.output_dir / "report.json", rep.dump(2) + "\n");
  out << "checkpoint " << ckpt.string() << "\n";
  return kOk;
}

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  if (args.episodes == 0) throw ConfigError("--episodes must be at least 1");
  const sim::Task task = sim::parse_task(args.task);
  const auto state = load_checkpoint(args.checkpoint);
  const int steps = args.sampler_steps.value_or(state->config.sampler_steps);
  if (steps < 1) throw ConfigError("--sampler-steps must be at least 1");
  const EvalResult r = evaluate(*state->model, state->stats, task, args.episodes, args.seed, steps);
  out << eval_line(r) << "\n" << r.summary_json() << "\n";
  return kOk;
}

int cmd_ablate(const AblateArgs& args, std::ostream& out) {
  RunConfig rc = load_run_config(args.config);
  const sim::Dataset ds = load_training_data(rc);
  AblationOptions options;
  options.seeds = args.seeds.value_or(rc.ablation_seeds);
  options.episodes = args.episodes.value_or(rc.eval_episodes);
  if (options.episodes == 0) throw ConfigError("ablation needs at least one evaluation episode");
  options.eval_seed = rc.eval_seed;
  const fs::path dir = rc.output_dir;
  make_dirs(dir);
  write_text(dir / "config.yaml", rc.source_text);
  write_text(dir / "resolved_config.yaml", resolved_yaml(rc));
  std::ofstream cells(dir / "ablation.jsonl", std::ios::trunc);
  if (!cells) throw IoError("cannot write ablation results in " + dir.string());
  options.on_cell = [&](const AblationCell& c) {
    nlohmann::ordered_json j;
    j["variant"] = variant_name(c.variant);
    j["seed"] = c.seed;
    for (sim::Task t : sim::kAllTasks) j[sim::task_name(t)] = c.rates[static_cast<std::size_t>(t)];
    j["mean"] = c.mean;
    j["train_seconds"] = c.train_seconds;
    cells << j.dump() << '\n' << std::flush;
    out << j.dump() << "\n" << std::flush;
  };
  const AblationTable table = run_ablation(ds, rc.train, options);
  const std::string text = table.to_string();
  write_text(dir / "ablation.txt", text);
  out << text;
  return kOk;
}

int cmd_verify(const VerifyOptions& options, std::ostream& out) {
  bool ok = true;
  for (const SuiteResult& r : run_verify(options)) {
    out << format_suite(r) << "\n";
    ok = ok && r.passed;
  }
  out << (ok ? "all suites passed" : "verification FAILED") << "\n";
  return ok ? kOk : kNumerical;
}

int cmd_inspect(const InspectArgs& args, std::ostream& out) {
  const sim::Task task = sim::parse_task(args.task);
  const auto state = load_checkpoint(args.checkpoint);
  const PolicyModel& model = *state->model;
  const fs::path dir = args.out.empty() ? args.checkpoint.parent_path() / "inspect" : args.out;
  make_dirs(dir);
  const std::string instruction = sim::task_instruction(task);
  const StreamLayout layout = model.layout(model.language().token_ids(instruction).size());
  write_text(dir / "mask.txt", build_directional_mask(layout).to_string());
  out << "mask (" << layout.total() << " tokens) -> " << (dir / "mask.txt").string() << "\n";
  if (model.variant() != Variant::fdm_learnable) {
    out << "variant " << variant_name(model.variant()) << " has no learnable-query attention to dump\n";
    return kOk;
  }

  // Expert rollout; the FDM attention is read off at every step.
  sim::Episode ep(task, args.seed, {}, {}, false);
  std::ofstream alpha(dir / "attention.txt", std::ios::trunc);
  if (!alpha) throw IoError("cannot write " + (dir / "attention.txt").string());
  const std::size_t vision = model.config().vision_tokens();
  alpha << "# rows: step head in_contact | weights over [query, vision x" << vision << ", state]\n";
  double contact_mass = 0, free_mass = 0;
  std::size_t contact_rows = 0, free_rows = 0;
  while (!ep.done()) {
    const sim::Observation obs = ep.observe();
    const ModelInputs inputs = observation_inputs(obs, instruction, state->stats, false);
    std::vector<Real> weights;
    {
      ad::NoGradGuard no_grad;
      weights = model.encode(inputs, RunMode::sensor_free_inference, true).fdm_weights;
    }
    const std::size_t heads = model.fdm()->heads();
    const std::size_t ctx = weights.size() / heads;
    const bool contact = ep.contact().in_contact;
    for (std::size_t h = 0; h < heads; ++h) {
      alpha << ep.steps() << ' ' << h << ' ' << contact << " |";
      double mass = 0;
      for (std::size_t j = 0; j < ctx; ++j) {
        const Real w = weights[h * ctx + j];
        alpha << ' ' << fmt("%.15f", double(w));
        if (j >= 1 && j < 1 + vision) mass += w;
      }
      alpha << '\n';
      (contact ? contact_mass : free_mass) += mass;
      ++(contact ? contact_rows : free_rows);
    }
    ep.act(sim::expert_action(ep.world(), ep.physics()));
  }
  out << "attention (" << ep.steps() << " steps) -> " << (dir / "attention.txt").string() << "\n";
  if (contact_rows) out << fmt("mean vision attention mass in contact: %.4f\n", contact_mass / double(contact_rows));
  if (free_rows) out << fmt("mean vision attention mass in free space: %.4f\n", free_mass / double(free_rows));
  return kOk;
}

}  // namespace forcedistill::cli
