// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <cstring>

#include "forcedistill/actionexpert/flow_matching.hpp"
#include "forcedistill/common/error.hpp"
#include "json.hpp"

namespace forcedistill {

using nlohmann::json;
using nlohmann::ordered_json;

void TrainConfig::validate() const {
  model.validate();
  if (!(lambda >= 0) || !(mu >= 0)) throw ConfigError("lambda and mu must be non-negative");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(grad_clip > 0)) throw ConfigError("grad_clip must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (!(tau_alpha > 0) || !(tau_beta > 0)) throw ConfigError("tau Beta parameters must be positive");
  if (sampler_steps < 1) throw ConfigError("sampler_steps must be at least 1");
}

std::string metrics_line(const StepLog& log) {
  ordered_json j;
  j["step"] = log.step;
  j["total"] = log.total;
  j["flow"] = log.flow;
  if (log.distill) j["distill"] = *log.distill;
  if (log.recon) j["recon"] = *log.recon;
  j["grad_norm"] = log.grad_norm;
  j["lr"] = log.lr;
  return j.dump();
}

Adam::Adam(Real lr, Real beta1, Real beta2, Real eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<ParameterPtr>& params, Real grad_scale) {
  ++t_;
  const Real c1 = Real(1) - std::pow(beta1_, Real(t_));
  const Real c2 = Real(1) - std::pow(beta2_, Real(t_));
  for (const auto& p : params) {
    if (!p->has_grad()) continue;
    auto [mit, m_new] = m_.try_emplace(p->name(), Tensor::zeros_like(p->value()));
    auto [vit, v_new] = v_.try_emplace(p->name(), Tensor::zeros_like(p->value()));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    Tensor& w = p->value();
    const Tensor& g = p->grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Real gi = g[i] * grad_scale;
      m[i] = beta1_ * m[i] + (Real(1) - beta1_) * gi;
      v[i] = beta2_ * v[i] + (Real(1) - beta2_) * gi * gi;
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

Real gradient_norm(const std::vector<ParameterPtr>& params) {
  Real sq = 0;
  for (const auto& p : params) {
    if (!p->has_grad()) continue;
    for (Real g : p->grad().storage()) sq += g * g;
  }
  return std::sqrt(sq);
}

TrainingState::TrainingState(TrainConfig cfg, sim::NormalizationStats s)
    : config(std::move(cfg)), stats(std::move(s)), optimizer(config.learning_rate) {
  config.validate();
  model = std::make_unique<PolicyModel>(config.model, config.variant, config.seed);
}

TrainReport train(TrainingState& state, const sim::Dataset& dataset, const StepCallback& on_step) {
  const TrainConfig& cfg = state.config;
  const auto start = std::chrono::steady_clock::now();
  PolicyModel& model = *state.model;
  TrainReport report;
  report.frozen_digest = model.frozen_digest();
  const SampleIndex index(dataset);
  const bool with_force = cfg.variant != Variant::no_force;
  const auto params = model.store().trainable();
  const RngStream base(hash_combine(cfg.seed, 0x7a11));
  std::vector<std::pair<std::size_t, std::size_t>> picks(cfg.batch_size);
  std::vector<Real> taus(cfg.batch_size);

  while (state.step < cfg.steps) {
    RngStream rng = base.split(static_cast<std::uint64_t>(state.step));
    for (auto& pick : picks) {
      const auto i = std::min(static_cast<std::size_t>(rng.uniform() * Real(index.size())), index.size() - 1);
      pick = index[i];
    }
    for (auto& tau : taus) tau = sample_tau(rng, cfg.tau_alpha, cfg.tau_beta);
    const Tensor epsilon = rng.normal_tensor({cfg.batch_size * cfg.model.horizon, cfg.model.action_dim});
    const TrainingBatch batch = make_batch(dataset, picks, state.stats, cfg.model.horizon, with_force);

    model.store().zero_grad();
    const LossTerms terms = model.loss(batch, taus, epsilon, cfg.lambda, cfg.mu);
    const long step_no = state.step + 1;
    if (!std::isfinite(terms.total.item()))
      throw NumericalError("non-finite loss at step " + std::to_string(step_no), step_no);
    terms.total.backward();
    const Real norm = gradient_norm(params);
    if (!std::isfinite(norm))
      throw NumericalError("non-finite gradient at step " + std::to_string(step_no), step_no);
    const Real scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : Real(1);
    if (cfg.cosine_decay) {
      const Real progress = Real(state.step) / Real(cfg.steps);
      state.optimizer.set_learning_rate(cfg.learning_rate * Real(0.5) * (Real(1) + std::cos(std::numbers::pi_v<Real> * progress)));
    }
    state.optimizer.step(params, scale);
    state.step = step_no;

    StepLog log{step_no, terms.total.item(), terms.flow.item(), std::nullopt, std::nullopt, norm,
                state.optimizer.learning_rate()};
    if (terms.distill) log.distill = terms.distill->item();
    if (terms.recon) log.recon = terms.recon->item();
    if (on_step) on_step(log);
    report.steps.push_back(log);
  }
  model.store().zero_grad();
  if (model.frozen_digest() != report.frozen_digest)
    throw InvariantError("frozen backbone parameters changed during training");
  report.final_step = state.step;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

TrainReport train(const sim::Dataset& dataset, const TrainConfig& config, std::unique_ptr<TrainingState>* out) {
  auto state = std::make_unique<TrainingState>(config, sim::compute_stats(dataset));
  TrainReport report = train(*state, dataset);
  if (out) *out = std::move(state);
  return report;
}

namespace {

constexpr char kMagic[8] = {'F', 'D', 'C', 'K', 'P', 'T', '\0', '\1'};

json model_json(const ModelConfig& m) {
  return {{"hidden_dim", m.hidden_dim},
          {"heads", m.heads},
          {"ffn_multiplier", m.ffn_multiplier},
          {"image_channels", m.image_channels},
          {"image_size", m.image_size},
          {"patch_size", m.patch_size},
          {"vocab_size", m.vocab_size},
          {"state_dim", m.state_dim},
          {"force_dim", m.force_dim},
          {"action_dim", m.action_dim},
          {"horizon", m.horizon},
          {"frozen_layers_total", m.frozen_layers_total},
          {"frozen_layers_used", m.frozen_layers_used},
          {"policy_layers", m.policy_layers},
          {"layernorm_eps", m.layernorm_eps},
          {"query_init_std", m.query_init_std}};
}

ModelConfig model_from(const json& j) {
  ModelConfig m;
  j.at("hidden_dim").get_to(m.hidden_dim);
  j.at("heads").get_to(m.heads);
  j.at("ffn_multiplier").get_to(m.ffn_multiplier);
  j.at("image_channels").get_to(m.image_channels);
  j.at("image_size").get_to(m.image_size);
  j.at("patch_size").get_to(m.patch_size);
  j.at("vocab_size").get_to(m.vocab_size);
  j.at("state_dim").get_to(m.state_dim);
  j.at("force_dim").get_to(m.force_dim);
  j.at("action_dim").get_to(m.action_dim);
  j.at("horizon").get_to(m.horizon);
  j.at("frozen_layers_total").get_to(m.frozen_layers_total);
  j.at("frozen_layers_used").get_to(m.frozen_layers_used);
  j.at("policy_layers").get_to(m.policy_layers);
  j.at("layernorm_eps").get_to(m.layernorm_eps);
  j.at("query_init_std").get_to(m.query_init_std);
  return m;
}

json config_json(const TrainConfig& c) {
  return {{"variant", variant_name(c.variant)},
          {"lambda", c.lambda},
          {"mu", c.mu},
          {"learning_rate", c.learning_rate},
          {"grad_clip", c.grad_clip},
          {"cosine_decay", c.cosine_decay},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"seed", c.seed},
          {"tau_alpha", c.tau_alpha},
          {"tau_beta", c.tau_beta},
          {"sampler_steps", c.sampler_steps},
          {"model", model_json(c.model)}};
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  j.at("lambda").get_to(c.lambda);
  j.at("mu").get_to(c.mu);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("grad_clip").get_to(c.grad_clip);
  c.cosine_decay = j.value("cosine_decay", false);
  j.at("batch_size").get_to(c.batch_size);
  j.at("steps").get_to(c.steps);
  j.at("seed").get_to(c.seed);
  j.at("tau_alpha").get_to(c.tau_alpha);
  j.at("tau_beta").get_to(c.tau_beta);
  j.at("sampler_steps").get_to(c.sampler_steps);
  c.model = model_from(j.at("model"));
  return c;
}

json standardizer_json(const Standardizer& s) { return {{"mean", s.mean()}, {"std", s.stddev()}}; }

Standardizer standardizer_from(const json& j) {
  return Standardizer(j.at("mean").get<std::vector<Real>>(), j.at("std").get<std::vector<Real>>());
}

}  // namespace

std::string train_config_json(const TrainConfig& config) { return config_json(config).dump(2); }

TrainConfig train_config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
}

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path) {
  json tensors = json::array();
  std::vector<double> blob;
  auto append = [&](const std::string& name, const char* role, const Tensor& t) {
    tensors.push_back({{"name", name}, {"role", role}, {"shape", t.shape()}, {"offset", blob.size()}});
    blob.insert(blob.end(), t.storage().begin(), t.storage().end());
  };
  for (const auto& [name, p] : state.model->store().all()) append(name, "param", p->value());
  for (const auto& [name, t] : state.optimizer.first_moments()) append(name, "adam_m", t);
  for (const auto& [name, t] : state.optimizer.second_moments()) append(name, "adam_v", t);
  const json header = {{"version", kCheckpointVersion},
                       {"step", state.step},
                       {"adam_iterations", state.optimizer.iterations()},
                       {"config", config_json(state.config)},
                       {"normalization",
                        {{"state", standardizer_json(state.stats.state)},
                         {"force", standardizer_json(state.stats.force)},
                         {"action", standardizer_json(state.stats.action)}}},
                       {"frozen_digest", state.model->frozen_digest()},
                       {"tensors", tensors}};
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(len));
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(double)));
    if (!out) throw IoError("short write to checkpoint " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

std::unique_ptr<TrainingState> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError(path.string() + " is not a checkpoint");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint header in " + path.string());
  std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (rest.size() % sizeof(double) != 0) throw IoError("corrupt checkpoint payload in " + path.string());
  std::vector<double> blob(rest.size() / sizeof(double));
  std::memcpy(blob.data(), rest.data(), rest.size());

  try {
    const json header = json::parse(text);
    if (header.at("version").get<int>() != kCheckpointVersion)
      throw IoError("unsupported checkpoint version in " + path.string());
    const json& n = header.at("normalization");
    sim::NormalizationStats stats{standardizer_from(n.at("state")), standardizer_from(n.at("force")),
                                  standardizer_from(n.at("action"))};
    auto state = std::make_unique<TrainingState>(config_from(header.at("config")), std::move(stats));
    state->step = header.at("step").get<long>();
    state->optimizer.set_iterations(header.at("adam_iterations").get<long>());
    std::size_t params_seen = 0;
    for (const json& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto role = t.at("role").get<std::string>();
      const auto shape = t.at("shape").get<Shape>();
      const auto offset = t.at("offset").get<std::size_t>();
      const std::size_t count = shape_size(shape);
      if (offset + count > blob.size()) throw IoError("checkpoint tensor " + name + " runs past the payload");
      Tensor value(shape, std::vector<Real>(blob.begin() + offset, blob.begin() + offset + count));
      if (role == "param") {
        const ParameterPtr p = state->model->store().find(name);
        if (!p || p->value().shape() != shape)
          throw IoError("checkpoint parameter " + name + " does not match the model");
        p->value() = std::move(value);
        ++params_seen;
      } else if (role == "adam_m") {
        state->optimizer.first_moments()[name] = std::move(value);
      } else if (role == "adam_v") {
        state->optimizer.second_moments()[name] = std::move(value);
      } else {
        throw IoError("unknown tensor role " + role);
      }
    }
    if (params_seen != state->model->store().all().size())
      throw IoError("checkpoint is missing model parameters");
    if (state->model->frozen_digest() != header.at("frozen_digest").get<std::string>())
      throw IoError("checkpoint frozen digest mismatch");
    return state;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint header in " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IoError("checkpoint " + path.string() + " holds an invalid config: " + e.what());
  }
}

}  // namespace forcedistill
