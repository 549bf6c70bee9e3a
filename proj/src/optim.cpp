/* Copyright 2026 The fopkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "fopkit/optim.hpp"

#include <cmath>
#include <string>

#include "fopkit/error.hpp"

namespace fopkit {
namespace {

std::vector<Matrix> zeros_like(const Model& model) {
  std::vector<Matrix> out;
  out.reserve(model.num_layers());
  for (const auto& l : model.layers()) out.emplace_back(l.weights.rows(), l.weights.cols());
  return out;
}

void require_finite_updates(const std::vector<Matrix>& updates, const char* who) {
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (!all_finite(updates[i])) {
      throw Error(ErrorKind::kNonFiniteUpdate,
                  std::string(who) + ": non-finite update in layer " + std::to_string(i));
    }
  }
}

void add_weight_decay(const Model& model, std::vector<Matrix>& updates, double lr, double weight_decay) {
  if (weight_decay == 0.0) return;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    updates[i] = axpy(updates[i], lr * weight_decay, model.layer(i).weights);
  }
}

std::vector<FactorStatistics> tape_statistics(const BatchTape& tape) {
  std::vector<FactorStatistics> stats;
  stats.reserve(tape.inputs.size());
  for (std::size_t i = 0; i < tape.inputs.size(); ++i) {
    stats.push_back(batch_statistics(tape.inputs[i], tape.preact_grads[i]));
  }
  return stats;
}

}  // namespace

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adamw") return OptimizerKind::kAdamw;
  if (name == "kfac") return OptimizerKind::kKfac;
  if (name == "fop") return OptimizerKind::kFop;
  throw Error(ErrorKind::kInvalidParam, "unknown optimizer '" + std::string(name) + "'");
}

const char* to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kAdamw: return "adamw";
    case OptimizerKind::kKfac: return "kfac";
    case OptimizerKind::kFop: return "fop";
  }
  return "sgd";
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error(ErrorKind::kInvalidParam, "learning rate must be positive");
  const bool second_order = kind == OptimizerKind::kKfac || kind == OptimizerKind::kFop;
  if (second_order && !(damping > 0.0)) throw Error(ErrorKind::kInvalidParam, "damping must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::kInvalidParam, "momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw Error(ErrorKind::kInvalidParam, "weight decay must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
      !(adam_eps > 0.0)) {
    throw Error(ErrorKind::kInvalidParam, "invalid Adam parameters");
  }
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw Error(ErrorKind::kInvalidParam, "ema decay must lie in [0, 1)");
  curvature.validate();
  scheduler.validate();
  if (fop.epsilon && !(*fop.epsilon >= 0.0)) throw Error(ErrorKind::kInvalidParam, "epsilon must be >= 0");
  if (!(fop.eta_clamp.lo <= fop.eta_clamp.hi)) throw Error(ErrorKind::kInvalidParam, "eta clamp interval is empty");
}

OptimizerState OptimizerState::create(const Model& model, const OptimizerConfig& cfg) {
  OptimizerState state;
  state.lr = LrScheduler(cfg.scheduler, cfg.lr).current();
  switch (cfg.kind) {
    case OptimizerKind::kSgd: state.velocity = zeros_like(model); break;
    case OptimizerKind::kAdamw:
      state.adam_m = zeros_like(model);
      state.adam_v = zeros_like(model);
      break;
    case OptimizerKind::kKfac:
    case OptimizerKind::kFop:
      if (cfg.precond_momentum) state.velocity = zeros_like(model);
      for (std::size_t i = 0; i < model.num_layers(); ++i) {
        const auto& w = model.layer(i).weights;
        state.blocks.emplace_back(i, w.cols(), w.rows(), cfg.ema_decay);
      }
      break;
  }
  return state;
}

void sgd_step(Model& model, const BatchTape& tape, const OptimizerConfig& cfg, OptimizerState& state) {
  if (state.velocity.size() != model.num_layers()) state.velocity = zeros_like(model);
  std::vector<Matrix> updates;
  updates.reserve(model.num_layers());
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    Matrix& v = state.velocity[i];
    v *= cfg.momentum;
    v += tape.grads[i];
    updates.push_back(v * state.lr);
  }
  add_weight_decay(model, updates, state.lr, cfg.weight_decay);
  require_finite_updates(updates, "sgd_step");
  apply_update(model, updates);
  ++state.step;
}

void adamw_step(Model& model, const BatchTape& tape, const OptimizerConfig& cfg, OptimizerState& state) {
  if (state.adam_m.size() != model.num_layers()) {
    state.adam_m = zeros_like(model);
    state.adam_v = zeros_like(model);
  }
  ++state.adam_t;
  const double t = static_cast<double>(state.adam_t);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  std::vector<Matrix> updates;
  updates.reserve(model.num_layers());
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    auto g = tape.grads[i].data();
    auto m = state.adam_m[i].data();
    auto v = state.adam_v[i].data();
    Matrix d(tape.grads[i].rows(), tape.grads[i].cols());
    auto dd = d.data();
    for (std::size_t k = 0; k < g.size(); ++k) {
      m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * g[k];
      v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      dd[k] = state.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
    updates.push_back(std::move(d));
  }
  add_weight_decay(model, updates, state.lr, cfg.weight_decay);
  require_finite_updates(updates, "adamw_step");
  apply_update(model, updates);
  ++state.step;
}

void update_curvature(std::vector<KroneckerFisherBlock>& blocks, std::span<const FactorStatistics> stats,
                      const OptimizerConfig& cfg, std::size_t step) {
  const bool accumulate = cfg.curvature.accumulates_at(step);
  if (accumulate && stats.size() != blocks.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "update_curvature: one statistics entry per layer required");
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (accumulate) blocks[i].accumulate(stats[i], step);
    if (cfg.curvature.refreshes_at(step) || !blocks[i].has_inverse()) blocks[i].refresh_inverse(cfg.damping, step);
  }
}

void apply_second_order_updates(Model& model, std::vector<Matrix> updates, const OptimizerConfig& cfg,
                                OptimizerState& state) {
  if (cfg.precond_momentum && cfg.momentum > 0.0) {
    if (state.velocity.size() != model.num_layers()) state.velocity = zeros_like(model);
    for (std::size_t i = 0; i < updates.size(); ++i) {
      state.velocity[i] *= cfg.momentum;
      state.velocity[i] += updates[i];
      updates[i] = state.velocity[i];
    }
  }
  add_weight_decay(model, updates, state.lr, cfg.weight_decay);
  require_finite_updates(updates, "second-order step");
  apply_update(model, updates);
}

void kfac_step(Model& model, const BatchTape& tape, const OptimizerConfig& cfg, OptimizerState& state) {
  if (state.blocks.size() != model.num_layers()) {
    throw Error(ErrorKind::kInvalidParam, "kfac_step: optimizer state has no Fisher blocks for this model");
  }
  std::vector<FactorStatistics> stats;
  if (cfg.curvature.accumulates_at(state.step)) stats = tape_statistics(tape);
  update_curvature(state.blocks, stats, cfg, state.step);
  std::vector<Matrix> updates;
  updates.reserve(model.num_layers());
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    updates.push_back(kfac_layer_step(tape.grads[i], state.blocks[i], state.lr));
  }
  apply_second_order_updates(model, std::move(updates), cfg, state);
  ++state.step;
}

StepReport fop_step(Model& model, const SubBatch& first, const SubBatch& second, const OptimizerConfig& cfg,
                    OptimizerState& state) {
  if (first.labels.empty() || second.labels.empty()) {
    throw Error(ErrorKind::kBatchTooSmall, "fop_step: both sub-batches must be nonempty");
  }
  if (state.blocks.size() != model.num_layers()) {
    throw Error(ErrorKind::kInvalidParam, "fop_step: optimizer state has no Fisher blocks for this model");
  }
  const BatchTape t1 = loss_and_backward(model, first.features, first.labels);
  const BatchTape t2 = loss_and_backward(model, second.features, second.labels);

  std::vector<FactorStatistics> stats;
  if (cfg.curvature.accumulates_at(state.step)) {
    stats.reserve(model.num_layers());
    for (std::size_t i = 0; i < model.num_layers(); ++i) {
      const FactorStatistics parts[2] = {batch_statistics(t1.inputs[i], t1.preact_grads[i]),
                                         batch_statistics(t2.inputs[i], t2.preact_grads[i])};
      stats.push_back(merge_statistics(parts));
    }
  }
  update_curvature(state.blocks, stats, cfg, state.step);

  StepReport report;
  report.batch_size = t1.batch_size + t2.batch_size;
  report.correct = t1.correct + t2.correct;
  report.loss = (t1.loss * static_cast<double>(t1.batch_size) + t2.loss * static_cast<double>(t2.batch_size)) /
                static_cast<double>(report.batch_size);
  std::vector<Matrix> updates;
  updates.reserve(model.num_layers());
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    const GradientPair pair = make_gradient_pair(t1.grads[i], t2.grads[i], i);
    report.plans.push_back(fop_layer_step(pair, state.blocks[i], state.lr, cfg.fop));
    updates.push_back(report.plans.back().update);
  }
  apply_second_order_updates(model, std::move(updates), cfg, state);
  ++state.step;
  return report;
}

std::uint64_t split_seed(std::uint64_t seed, std::size_t step) {
  // splitmix64 finalizer over (seed, step)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(step) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

StepReport fop_step(Model& model, const Matrix& x, std::span<const int> labels, const OptimizerConfig& cfg,
                    OptimizerState& state) {
  const auto halves = split_batch(x, labels, split_seed(cfg.seed, state.step));
  return fop_step(model, halves.first, halves.second, cfg, state);
}

StepReport optimizer_step(Model& model, const Matrix& x, std::span<const int> labels, const OptimizerConfig& cfg,
                          OptimizerState& state) {
  if (cfg.kind == OptimizerKind::kFop) return fop_step(model, x, labels, cfg, state);
  const BatchTape tape = loss_and_backward(model, x, labels);
  switch (cfg.kind) {
    case OptimizerKind::kSgd: sgd_step(model, tape, cfg, state); break;
    case OptimizerKind::kAdamw: adamw_step(model, tape, cfg, state); break;
    case OptimizerKind::kKfac: kfac_step(model, tape, cfg, state); break;
    case OptimizerKind::kFop: break;
  }
  StepReport report;
  report.loss = tape.loss;
  report.correct = tape.correct;
  report.batch_size = tape.batch_size;
  return report;
}

}  // namespace fopkit
