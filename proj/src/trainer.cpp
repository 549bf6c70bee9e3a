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

#include "fopkit/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "fopkit/error.hpp"
#include "fopkit/rng.hpp"

namespace fopkit {
namespace {

constexpr std::uint64_t kShuffleStream = 0x53485546464C45ULL;

Dataset synthetic(const DataSpec& spec, std::size_t per_class, std::uint64_t seed) {
  if (spec.kind == DataKind::kBlobs) return gen_blobs(spec.classes, per_class, spec.dim, spec.spread, seed);
  return gen_spirals(spec.classes, per_class, spec.noise, seed, spec.turns);
}

}  // namespace

TrainData load_data(const RunConfig& cfg) {
  const auto& spec = cfg.data;
  TrainData out;
  if (spec.kind == DataKind::kIdx) {
    out.train = load_idx(spec.images, spec.labels);
    if (!spec.eval_images.empty() || !spec.eval_labels.empty()) {
      if (spec.eval_images.empty() || spec.eval_labels.empty()) {
        throw Error(ErrorKind::kConfig, "data: eval_images and eval_labels must be given together");
      }
      out.eval = load_idx(spec.eval_images, spec.eval_labels);
    }
    return out;
  }
  const std::uint64_t seed = spec.seed.value_or(cfg.seed);
  if (spec.kind == DataKind::kBlobs && spec.eval_per_class > 0) {
    // One draw so both sets share the cluster centers; the tail of each class
    // is held out.
    const std::size_t total = spec.per_class + spec.eval_per_class;
    const Dataset all = gen_blobs(spec.classes, total, spec.dim, spec.spread, seed);
    std::vector<std::size_t> train_rows, eval_rows;
    for (std::size_t r = 0; r < all.size(); ++r) (r % total < spec.per_class ? train_rows : eval_rows).push_back(r);
    auto take = [&](const std::vector<std::size_t>& rows) {
      const SubBatch b = gather_rows(all.features, all.labels, rows);
      return Dataset{b.features, b.labels, all.classes, all.provenance};
    };
    out.train = take(train_rows);
    out.eval = take(eval_rows);
    return out;
  }
  out.train = synthetic(spec, spec.per_class, seed);
  if (spec.eval_per_class > 0) out.eval = synthetic(spec, spec.eval_per_class, seed + 1);
  return out;
}

Model initial_model(const RunConfig& cfg, const Dataset& train) {
  const auto widths = cfg.widths(train.features.cols(), train.classes);
  return Model::mlp(widths, cfg.model.activation, cfg.seed);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (batch_size == 0 || batch_size >= n) return {order};
  Rng rng(split_seed(seed ^ kShuffleStream, epoch));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start == 1 && !batches.empty()) {
      batches.back().push_back(order[start]);
    } else {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return batches;
}

TrainResult train(const RunConfig& cfg, const TrainData& data, const TrainHooks& hooks, const Checkpoint* resume) {
  cfg.optimizer.validate();
  data.train.validate();
  const auto clock_start = std::chrono::steady_clock::now();

  TrainResult result;
  LrScheduler scheduler(cfg.optimizer.scheduler, cfg.optimizer.lr);
  std::size_t start_epoch = 0;
  if (resume != nullptr) {
    const Model fresh = initial_model(cfg, data.train);
    bool same_shape = fresh.num_layers() == resume->model.num_layers();
    for (std::size_t i = 0; same_shape && i < fresh.num_layers(); ++i) {
      same_shape = fresh.layer(i).weights.same_shape(resume->model.layer(i).weights) &&
                   fresh.layer(i).activation == resume->model.layer(i).activation;
    }
    if (!same_shape) throw Error(ErrorKind::kConfig, "resume: checkpoint model does not match the config");
    if (resume->kind != cfg.optimizer.kind) {
      throw Error(ErrorKind::kConfig, std::string("resume: checkpoint optimizer is ") + to_string(resume->kind));
    }
    result.model = resume->model;
    result.state = resume->state;
    scheduler.restore(resume->scheduler_lr, resume->scheduler_best, resume->scheduler_bad_epochs);
    start_epoch = resume->epoch;
  } else {
    result.model = initial_model(cfg, data.train);
    result.state = OptimizerState::create(result.model, cfg.optimizer);
  }

  Model& model = result.model;
  OptimizerState& state = result.state;
  const bool want_kl = cfg.output.kl_diagnostics && cfg.optimizer.kind == OptimizerKind::kFop;

  auto snapshot = [&](std::size_t completed) {
    Checkpoint c;
    c.epoch = completed;
    c.model = model;
    c.kind = cfg.optimizer.kind;
    c.state = state;
    c.scheduler_lr = scheduler.current();
    c.scheduler_best = scheduler.plateau().best();
    c.scheduler_bad_epochs = scheduler.plateau().bad_epochs();
    return c;
  };

  const std::size_t n = data.train.size();
  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    state.lr = scheduler.current();
    const double epoch_lr = state.lr;
    double loss_sum = 0.0;
    std::size_t batch_count = 0;
    for (const auto& rows : epoch_batches(n, cfg.batch_size, cfg.seed, epoch)) {
      StepReport report;
      if (rows.size() == n && cfg.batch_size == 0) {
        report = optimizer_step(model, data.train.features, data.train.labels, cfg.optimizer, state);
      } else {
        const SubBatch batch = gather_rows(data.train.features, data.train.labels, rows);
        report = optimizer_step(model, batch.features, batch.labels, cfg.optimizer, state);
      }
      if (!std::isfinite(report.loss)) {
        throw Error(ErrorKind::kNonFiniteUpdate, "training loss became non-finite at step " +
                                                     std::to_string(state.step));
      }
      loss_sum += report.loss;
      ++batch_count;

      if (hooks.on_record && state.step % cfg.output.log_every == 0) {
        MetricsRecord rec;
        rec.step = state.step;
        rec.epoch = epoch;
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
        rec.train_loss = report.loss;
        rec.train_accuracy =
            report.batch_size == 0 ? 0.0 : static_cast<double>(report.correct) / static_cast<double>(report.batch_size);
        if (data.eval) {
          const auto ev = evaluate(model, data.eval->features, data.eval->labels);
          rec.eval_loss = ev.loss;
          rec.eval_accuracy = ev.accuracy;
        }
        rec.lr = epoch_lr;
        for (const auto& plan : report.plans) rec.layers.push_back(layer_metrics(plan));
        if (want_kl) {
          rec.kl.emplace();
          for (const auto& plan : report.plans) {
            rec.kl->push_back(kl_metrics(plan, state.blocks[plan.layer_id], epoch_lr));
          }
        }
        hooks.on_record(rec);
      }
    }

    const double mean_loss = loss_sum / static_cast<double>(batch_count);
    const double accuracy = evaluate(model, data.train.features, data.train.labels).accuracy;
    result.epochs.push_back({epoch, mean_loss, accuracy, epoch_lr});
    scheduler.end_epoch(epoch, mean_loss);

    const bool reached = hooks.stop_accuracy && accuracy >= *hooks.stop_accuracy;
    if (reached && !result.epochs_to_target) result.epochs_to_target = epoch + 1;
    const bool last = epoch + 1 == cfg.epochs || reached;
    if (hooks.on_checkpoint) {
      const bool periodic = cfg.output.checkpoint_every > 0 && (epoch + 1) % cfg.output.checkpoint_every == 0;
      if (periodic || last) hooks.on_checkpoint(snapshot(epoch + 1), last);
    }
    if (reached) break;
  }
  state.lr = scheduler.current();
  return result;
}

}  // namespace fopkit
