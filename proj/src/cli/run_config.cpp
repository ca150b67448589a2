// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/cli/run_config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "forcedistill/common/error.hpp"

namespace forcedistill {

namespace fs = std::filesystem;

fs::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return (env && *env) ? fs::path(env) : fs::path("runs");
}

namespace {

template <class T>
T scalar(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config key '" + key + "' has an invalid value");
  }
}

std::vector<sim::Task> parse_tasks(const YAML::Node& node) {
  std::vector<sim::Task> tasks;
  auto add = [&](const std::string& name) {
    try {
      tasks.push_back(sim::parse_task(name));
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
  };
  if (node.IsSequence()) {
    for (const auto& item : node) add(scalar<std::string>(item, "tasks"));
  } else {
    const auto text = scalar<std::string>(node, "tasks");
    if (text == "all") return {sim::kAllTasks.begin(), sim::kAllTasks.end()};
    add(text);
  }
  if (tasks.empty()) throw ConfigError("config key 'tasks' lists no task");
  return tasks;
}

}  // namespace

RunConfig parse_run_config(const std::string& yaml_text,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  RunConfig c;
  c.source_text = yaml_text;
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw ConfigError("config must be a mapping of keys to values");
  for (const auto& [key, value] : overrides) root[key] = YAML::Load(value);

  TrainConfig& t = c.train;
  using Setter = std::function<void(const YAML::Node&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"tasks", [&](const YAML::Node& n, const std::string&) { c.tasks = parse_tasks(n); }},
      {"variant",
       [&](const YAML::Node& n, const std::string& k) { t.variant = parse_variant(scalar<std::string>(n, k)); }},
      {"seed", [&](const YAML::Node& n, const std::string& k) { t.seed = scalar<std::uint64_t>(n, k); }},
      {"dataset", [&](const YAML::Node& n, const std::string& k) { c.dataset = scalar<std::string>(n, k); }},
      {"output_dir", [&](const YAML::Node& n, const std::string& k) { c.output_dir = scalar<std::string>(n, k); }},
      {"steps", [&](const YAML::Node& n, const std::string& k) { t.steps = scalar<long>(n, k); }},
      {"batch_size", [&](const YAML::Node& n, const std::string& k) { t.batch_size = scalar<std::size_t>(n, k); }},
      {"learning_rate", [&](const YAML::Node& n, const std::string& k) { t.learning_rate = scalar<Real>(n, k); }},
      {"lambda", [&](const YAML::Node& n, const std::string& k) { t.lambda = scalar<Real>(n, k); }},
      {"mu", [&](const YAML::Node& n, const std::string& k) { t.mu = scalar<Real>(n, k); }},
      {"grad_clip", [&](const YAML::Node& n, const std::string& k) { t.grad_clip = scalar<Real>(n, k); }},
      {"cosine_decay", [&](const YAML::Node& n, const std::string& k) { t.cosine_decay = scalar<bool>(n, k); }},
      {"tau_alpha", [&](const YAML::Node& n, const std::string& k) { t.tau_alpha = scalar<Real>(n, k); }},
      {"tau_beta", [&](const YAML::Node& n, const std::string& k) { t.tau_beta = scalar<Real>(n, k); }},
      {"sampler_steps", [&](const YAML::Node& n, const std::string& k) { t.sampler_steps = scalar<int>(n, k); }},
      {"eval_episodes",
       [&](const YAML::Node& n, const std::string& k) { c.eval_episodes = scalar<std::size_t>(n, k); }},
      {"eval_seed", [&](const YAML::Node& n, const std::string& k) { c.eval_seed = scalar<std::uint64_t>(n, k); }},
      {"ablation_seeds",
       [&](const YAML::Node& n, const std::string& k) {
         if (!n.IsSequence() || n.size() == 0) throw ConfigError("config key 'ablation_seeds' must be a non-empty list");
         c.ablation_seeds.clear();
         for (const auto& s : n) c.ablation_seeds.push_back(scalar<std::uint64_t>(s, k));
       }},
  };
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(kv.second, key);
  }
  t.validate();
  if (c.dataset.empty()) c.dataset = output_root() / "data";
  if (c.output_dir.empty())
    c.output_dir = output_root() / (std::string(variant_name(t.variant)) + "_seed" + std::to_string(t.seed));
  return c;
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), overrides);
}

std::string resolved_yaml(const RunConfig& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "tasks" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (sim::Task task : c.tasks) out << sim::task_name(task);
  out << YAML::EndSeq;
  const TrainConfig& t = c.train;
  out << YAML::Key << "variant" << YAML::Value << variant_name(t.variant);
  out << YAML::Key << "seed" << YAML::Value << t.seed;
  out << YAML::Key << "dataset" << YAML::Value << c.dataset.string();
  out << YAML::Key << "output_dir" << YAML::Value << c.output_dir.string();
  out << YAML::Key << "steps" << YAML::Value << t.steps;
  out << YAML::Key << "batch_size" << YAML::Value << t.batch_size;
  out << YAML::Precision(17);
  out << YAML::Key << "learning_rate" << YAML::Value << double(t.learning_rate);
  out << YAML::Key << "lambda" << YAML::Value << double(t.lambda);
  out << YAML::Key << "mu" << YAML::Value << double(t.mu);
  out << YAML::Key << "grad_clip" << YAML::Value << double(t.grad_clip);
  out << YAML::Key << "cosine_decay" << YAML::Value << t.cosine_decay;
  out << YAML::Key << "tau_alpha" << YAML::Value << double(t.tau_alpha);
  out << YAML::Key << "tau_beta" << YAML::Value << double(t.tau_beta);
  out << YAML::Key << "sampler_steps" << YAML::Value << t.sampler_steps;
  out << YAML::Key << "eval_episodes" << YAML::Value << c.eval_episodes;
  out << YAML::Key << "eval_seed" << YAML::Value << c.eval_seed;
  out << YAML::Key << "ablation_seeds" << YAML::Value << YAML::Flow << c.ablation_seeds;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

sim::Dataset filter_tasks(sim::Dataset dataset, const std::vector<sim::Task>& tasks) {
  std::vector<sim::Demonstration> kept;
  for (auto& e : dataset.episodes)
    if (std::find(tasks.begin(), tasks.end(), e.task) != tasks.end()) kept.push_back(std::move(e));
  if (kept.empty()) throw InputError("dataset holds no episodes for the configured tasks");
  dataset.episodes = std::move(kept);
  return dataset;
}

}  // namespace forcedistill
