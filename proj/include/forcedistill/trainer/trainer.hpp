// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "forcedistill/contactsim/demos.hpp"
#include "forcedistill/trainer/model.hpp"

namespace forcedistill {

struct TrainConfig {
  Variant variant = Variant::fdm_learnable;
  Real lambda = Real(1);
  Real mu = Real(1);
  Real learning_rate = Real(3e-4);
  Real grad_clip = Real(1);
  bool cosine_decay = false;  // anneal lr to zero over `steps`
  std::size_t batch_size = 32;
  long steps = 2000;
  std::uint64_t seed = 0;
  Real tau_alpha = Real(1.5);
  Real tau_beta = Real(1);
  int sampler_steps = 10;
  ModelConfig model;

  void validate() const;  // throws ConfigError
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct StepLog {
  long step = 0;  // 1-based index of the update that produced these losses
  Real total = 0;
  Real flow = 0;
  std::optional<Real> distill;
  std::optional<Real> recon;
  Real grad_norm = 0;
  Real lr = 0;
};

// One JSON object per line: step, total, flow, [distill, recon], grad_norm, lr.
std::string metrics_line(const StepLog& log);

class Adam {
 public:
  explicit Adam(Real lr, Real beta1 = Real(0.9), Real beta2 = Real(0.999), Real eps = Real(1e-8));

  // Applies grad * grad_scale to every parameter in `params`.
  void step(const std::vector<ParameterPtr>& params, Real grad_scale = Real(1));

  Real learning_rate() const noexcept { return lr_; }
  void set_learning_rate(Real lr) noexcept { lr_ = lr; }
  long iterations() const noexcept { return t_; }
  void set_iterations(long t) noexcept { t_ = t; }
  std::map<std::string, Tensor>& first_moments() noexcept { return m_; }
  std::map<std::string, Tensor>& second_moments() noexcept { return v_; }
  const std::map<std::string, Tensor>& first_moments() const noexcept { return m_; }
  const std::map<std::string, Tensor>& second_moments() const noexcept { return v_; }

 private:
  Real lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

// Global L2 norm of the gradients of `params`.
Real gradient_norm(const std::vector<ParameterPtr>& params);

// Everything needed to continue a run bit-exactly.
struct TrainingState {
  TrainConfig config;
  sim::NormalizationStats stats;
  std::unique_ptr<PolicyModel> model;
  Adam optimizer;
  long step = 0;

  TrainingState(TrainConfig config, sim::NormalizationStats stats);
};

struct TrainReport {
  std::vector<StepLog> steps;
  double wall_seconds = 0;
  std::string frozen_digest;
  long final_step = 0;
};

using StepCallback = std::function<void(const StepLog&)>;

// Runs updates until state.step == state.config.steps. Throws NumericalError
// on a non-finite loss or gradient and InvariantError if the frozen backbone
// changed.
TrainReport train(TrainingState& state, const sim::Dataset& dataset, const StepCallback& on_step = {});

// Convenience: fresh state with dataset statistics, trained to completion.
TrainReport train(const sim::Dataset& dataset, const TrainConfig& config, std::unique_ptr<TrainingState>* out);

// Binary container: 8-byte magic, little-endian u64 header length, JSON
// header (configs, statistics, step, tensor index), then raw f64 data.
inline constexpr int kCheckpointVersion = 1;
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);
std::unique_ptr<TrainingState> load_checkpoint(const std::filesystem::path& path);  // throws IoError

std::string train_config_json(const TrainConfig& config);  // pretty-printed
TrainConfig train_config_from_json(const std::string& text);

}  // namespace forcedistill
