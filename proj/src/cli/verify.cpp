// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/cli/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "forcedistill/actionexpert/flow_matching.hpp"
#include "forcedistill/actionexpert/policy_head.hpp"
#include "forcedistill/common/error.hpp"
#include "forcedistill/embedding/encoders.hpp"
#include "forcedistill/fdm/force_distillation.hpp"
#include "forcedistill/numerics/gradcheck.hpp"
#include "forcedistill/trainer/model.hpp"

namespace forcedistill {

namespace {

using Clock = std::chrono::steady_clock;

SuiteResult timed(const std::string& name, const std::function<void(SuiteResult&)>& body) {
  SuiteResult r;
  r.name = name;
  const auto start = Clock::now();
  try {
    body(r);
  } catch (const Error& e) {
    r.passed = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

// Mean squared distance to a fixed random target keeps losses near 1.
ad::Var fit_loss(const ad::Var& x, const Tensor& target) {
  return ad::scale(ad::squared_l2(x, ad::Var::constant(target)), Real(1) / Real(target.size()));
}

void record(SuiteResult& r, const GradCheckReport& report, const std::string& label) {
  if (report.max_relative_error >= r.max_error) {
    r.max_error = report.max_relative_error;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s: worst %s[%zu] analytic %.6e numeric %.6e", label.c_str(),
                  report.worst_parameter.c_str(), report.worst_index, double(report.worst_analytic),
                  double(report.worst_numeric));
    r.detail = buf;
  }
}

void finish_gradients(SuiteResult& r, std::size_t scalars) {
  r.passed = r.max_error <= GradCheckOptions{}.tolerance;
  r.detail += " (" + std::to_string(scalars) + " scalars)";
}

Tensor uniform_tensor(Shape shape, RngStream& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = rng.uniform();
  return t;
}

}  // namespace

ModelConfig gradcheck_config() {
  ModelConfig c;
  c.hidden_dim = 8;
  c.heads = 2;
  c.ffn_multiplier = 2;
  c.image_size = 8;
  c.patch_size = 4;
  c.vocab_size = 32;
  c.horizon = 2;
  c.frozen_layers_total = 2;
  c.frozen_layers_used = 1;
  c.policy_layers = 1;
  return c;
}

SuiteResult verify_gradients_embedding() {
  return timed("grad.embedding", [](SuiteResult& r) {
    const ModelConfig c = gradcheck_config();
    ParameterStore store;
    RngStream rng(11);
    VisionEncoder vision(store, c, rng);
    LanguageEncoder language(store, c, rng);
    StateEncoder state(store, c, rng);
    const Tensor images = uniform_tensor({2, c.image_values()}, rng);
    const std::vector<std::string> words{"press the button", "wipe the whiteboard"};
    const Tensor states = rng.normal_tensor({2, c.state_dim});
    const Tensor tv = rng.normal_tensor({2 * c.vision_tokens(), c.hidden_dim});
    const Tensor tl = rng.normal_tensor({6, c.hidden_dim});
    const Tensor ts = rng.normal_tensor({2, c.hidden_dim});
    const GradCheckReport rep = grad_check(
        [&] {
          return ad::add(ad::add(fit_loss(vision.encode(images).tokens, tv), fit_loss(language.encode(words).tokens, tl)),
                         fit_loss(state.encode(states).tokens, ts));
        },
        store.trainable());
    record(r, rep, "encoders");
    finish_gradients(r, rep.scalars_checked);
  });
}

SuiteResult verify_gradients_fdm() {
  return timed("grad.fdm", [](SuiteResult& r) {
    const ModelConfig c = gradcheck_config();
    ParameterStore store;
    RngStream rng(12);
    ForceDistillationModule fdm(store, c, rng);
    const std::size_t B = 2;
    const TokenBlock vision{ad::Var::constant(rng.normal_tensor({B * c.vision_tokens(), c.hidden_dim})),
                            Modality::vision, c.vision_tokens(), B};
    const TokenBlock state{ad::Var::constant(rng.normal_tensor({B, c.hidden_dim})), Modality::state, 1, B};
    const Tensor wrench = rng.normal_tensor({B, c.force_dim});
    const Tensor t1 = rng.normal_tensor({B, c.hidden_dim});
    const Tensor t2 = rng.normal_tensor({B, c.hidden_dim});
    const GradCheckReport rep = grad_check(
        [&] {
          const ForceToken predicted = fdm.predict(vision, state);
          const ForceToken actual = fdm.encode_actual(wrench, RunMode::training);
          ad::Var loss = fit_loss(predicted.embedding, t1);
          loss = ad::add(loss, ad::scale(distill_loss(predicted, actual), Real(0.1)));
          loss = ad::add(loss, fit_loss(fdm.decode(actual), wrench));
          return ad::add(loss, fit_loss(fdm.attend_with_query(actual.embedding, vision, state), t2));
        },
        store.trainable());
    record(r, rep, "fdm");
    finish_gradients(r, rep.scalars_checked);
  });
}

SuiteResult verify_gradients_fusion() {
  return timed("grad.fusion", [](SuiteResult& r) {
    const ModelConfig c = gradcheck_config();
    ParameterStore store;
    RngStream rng(13);
    const TransformerLayer layer = TransformerLayer::create(store, "layer", c, rng, true);
    const StreamLayout layout{2, 1, 1, 1};
    const DirectionalMask mask = build_directional_mask(layout);
    const std::size_t B = 2;
    const Tensor x = rng.normal_tensor({B * layout.total(), c.hidden_dim});
    const Tensor target = rng.normal_tensor({B * layout.total(), c.hidden_dim});
    const GradCheckReport rep =
        grad_check([&] { return fit_loss(transformer_block(ad::Var::constant(x), B, mask, layer), target); },
                   store.trainable());
    record(r, rep, "transformer layer");
    finish_gradients(r, rep.scalars_checked);
  });
}

SuiteResult verify_gradients_policy() {
  return timed("grad.policy", [](SuiteResult& r) {
    const ModelConfig c = gradcheck_config();
    ParameterStore store;
    RngStream rng(14);
    const PolicyHead head(store, c, rng);
    const std::size_t B = 2, rows = 5;
    const Tensor features = rng.normal_tensor({B * rows, c.hidden_dim});
    const Tensor noisy = rng.normal_tensor({B * c.horizon, c.action_dim});
    const Tensor target = rng.normal_tensor({B * c.horizon, c.action_dim});
    const std::vector<Real> taus{Real(0.3), Real(0.8)};
    const GradCheckReport rep = grad_check(
        [&] {
          return fit_loss(
              head.predict_velocity(ad::Var::constant(noisy), taus, ad::Var::constant(features), rows), target);
        },
        store.trainable());
    record(r, rep, "policy head");
    finish_gradients(r, rep.scalars_checked);
  });
}

SuiteResult verify_gradients_full_loss() {
  return timed("grad.full_loss", [](SuiteResult& r) {
    const ModelConfig c = gradcheck_config();
    std::size_t scalars = 0;
    for (Variant v : kAllVariants) {
      PolicyModel model(c, v, 15);
      RngStream rng(16);
      const std::size_t B = 2;
      TrainingBatch batch;
      batch.inputs.images = uniform_tensor({B, c.image_values()}, rng);
      batch.inputs.instructions = {"press the button", "insert the plug"};
      batch.inputs.states = rng.normal_tensor({B, c.state_dim});
      if (v != Variant::no_force) batch.inputs.force = rng.normal_tensor({B, c.force_dim});
      batch.actions = rng.normal_tensor({B * c.horizon, c.action_dim});
      const Tensor epsilon = rng.normal_tensor({B * c.horizon, c.action_dim});
      const std::vector<Real> taus{Real(0.25), Real(0.7)};
      const GradCheckReport rep = grad_check(
          [&] { return ad::scale(model.loss(batch, taus, epsilon, Real(0.5), Real(0.5)).total, Real(0.1)); },
          model.store().trainable());
      record(r, rep, variant_name(v));
      scalars += rep.scalars_checked;
    }
    finish_gradients(r, scalars);
  });
}

bool reference_mask_allows(const StreamLayout& layout, std::size_t i, std::size_t j) {
  const std::size_t p = layout.vision + layout.language;
  const bool query_perceptual = i < p;
  const bool key_perceptual = j < p;
  if (query_perceptual) return key_perceptual;  // perceptual tokens see only perceptual tokens
  if (key_perceptual) return true;              // control tokens see every perceptual token
  return j <= i;                                // and earlier-or-same control tokens
}

std::vector<StreamLayout> enumerate_layouts(std::size_t max_tokens) {
  std::vector<StreamLayout> out;
  for (std::size_t v = 0; v <= max_tokens; ++v)
    for (std::size_t l = 0; v + l <= max_tokens; ++l)
      for (std::size_t s = 0; v + l + s <= max_tokens; ++s)
        for (std::size_t f = 0; v + l + s + f <= max_tokens; ++f)
          if (v + l + s + f > 0) out.push_back({v, l, s, f});
  return out;
}

SuiteResult verify_masks(std::size_t max_tokens) {
  return timed("mask.exhaustive", [max_tokens](SuiteResult& r) {
    std::size_t mismatches = 0, entries = 0;
    const auto layouts = enumerate_layouts(max_tokens);
    for (const StreamLayout& layout : layouts) {
      const DirectionalMask mask = build_directional_mask(layout);
      for (std::size_t i = 0; i < layout.total(); ++i)
        for (std::size_t j = 0; j < layout.total(); ++j) {
          ++entries;
          mismatches += mask.allowed(i, j) != reference_mask_allows(layout, i, j);
        }
    }
    r.max_error = Real(mismatches);
    r.passed = mismatches == 0;
    r.detail = std::to_string(layouts.size()) + " layouts, " + std::to_string(entries) + " entries, " +
               std::to_string(mismatches) + " mismatches";
  });
}

SuiteResult verify_one_way_flow(const VerifyOptions& options) {
  return timed("flow.one_way", [&options](SuiteResult& r) {
    std::size_t perceptual_diffs = 0, state_diffs = 0;
    for (std::size_t trial = 0; trial < options.flow_trials; ++trial) {
      RngStream rng = RngStream(options.seed).split(trial);
      ModelConfig c;
      c.hidden_dim = 8 * (1 + trial % 3);
      c.heads = 1 + trial % 2;
      c.ffn_multiplier = 2;
      ParameterStore store;
      std::vector<TransformerLayer> layers;
      for (int l = 0; l < 2; ++l) layers.push_back(TransformerLayer::create(store, "l" + std::to_string(l), c, rng, false));
      const std::size_t B = 1 + trial % 3;
      StreamLayout full{1 + trial % 5, trial % 4, 1, 1};
      if (options.flip_mask_bit) {
        // Grow the perceptual block until the flipped entry exists.
        const std::size_t needed = std::max(options.flip_mask_bit->first, options.flip_mask_bit->second) + 1;
        if (full.total() < needed) full.vision += needed - full.total();
      }
      const StreamLayout perceptual{full.vision, full.language, 0, 0};
      DirectionalMask mask = build_directional_mask(full);
      DirectionalMask sub_mask = build_directional_mask(perceptual);
      if (options.flip_mask_bit) {
        const auto [i, j] = *options.flip_mask_bit;
        if (i < mask.size() && j < mask.size()) mask.set(i, j, !mask.allowed(i, j));
        if (i < sub_mask.size() && j < sub_mask.size()) sub_mask.set(i, j, !sub_mask.allowed(i, j));
      }
      auto run = [&](const Tensor& x, const DirectionalMask& m) {
        ad::NoGradGuard no_grad;
        ad::Var h = ad::Var::constant(x);
        for (const auto& layer : layers) h = transformer_block(h, B, m, layer);
        return h.value();
      };
      const std::size_t D = c.hidden_dim, P = perceptual.total(), N = full.total();
      const Tensor x = rng.normal_tensor({B * N, D});
      Tensor x_alt = x;
      Tensor x_perc({B * P, D});
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t d = 0; d < D; ++d) x_alt.at(b * N + full.force_index(), d) = rng.normal();
        for (std::size_t t = 0; t < P; ++t)
          for (std::size_t d = 0; d < D; ++d) x_perc.at(b * P + t, d) = x.at(b * N + t, d);
      }
      const Tensor y = run(x, mask), y_alt = run(x_alt, mask), y_perc = run(x_perc, sub_mask);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < P; ++t)
          for (std::size_t d = 0; d < D; ++d) perceptual_diffs += y.at(b * N + t, d) != y_perc.at(b * P + t, d);
        const std::size_t s = b * N + full.perceptual();
        for (std::size_t d = 0; d < D; ++d) state_diffs += y.at(s, d) != y_alt.at(s, d);
      }
    }
    r.max_error = Real(perceptual_diffs + state_diffs);
    r.passed = perceptual_diffs == 0 && state_diffs == 0;
    r.detail = std::to_string(options.flow_trials) + " trials, " + std::to_string(perceptual_diffs) +
               " perceptual entries changed by control tokens, " + std::to_string(state_diffs) +
               " state entries changed by the force token";
  });
}

SuiteResult verify_flow_oracle() {
  return timed("flow.oracle", [](SuiteResult& r) {
    RngStream rng(17);
    const Tensor demo = rng.normal_tensor({8, 3});
    Real worst = 0;
    for (int steps : {1, 2, 3, 5, 10, 25, 100}) {
      // Conditional field of a single-point data distribution.
      const VelocityField field = [&](const Tensor& a, Real tau) {
        Tensor v(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) v[i] = (a[i] - demo[i]) / (Real(1) - tau);
        return v;
      };
      const Tensor out = integrate_flow(rng.normal_tensor({8, 3}), steps, field);
      for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(out[i] - demo[i]));
    }
    r.max_error = worst;
    r.passed = worst <= Real(1e-6);
    r.detail = "Euler steps 1..100, max |chunk - demo|";
  });
}

std::vector<SuiteResult> run_verify(const VerifyOptions& options) {
  return {verify_gradients_embedding(), verify_gradients_fdm(),  verify_gradients_fusion(),
          verify_gradients_policy(),    verify_gradients_full_loss(), verify_masks(),
          verify_one_way_flow(options), verify_flow_oracle()};
}

std::string format_suite(const SuiteResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "[%s] %-16s max_error=%.3e time=%.2fs  %s", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                double(r.max_error), r.seconds, r.detail.c_str());
  return buf;
}

}  // namespace forcedistill
