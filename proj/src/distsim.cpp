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

#include "fopkit/distsim.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "fopkit/error.hpp"

namespace fopkit {
namespace {

struct Worker {
  std::size_t rank = 0;
  SubBatch data;
  BatchTape tape;
  // Factor statistics received as specialist, keyed by layer, in arrival order.
  std::map<std::size_t, std::vector<FactorStatistics>> inbox;
};

// Size-weighted mean of the members' per-layer gradients.
std::vector<Matrix> group_allreduce(const std::vector<Worker>& workers, bool primary) {
  std::vector<Matrix> sum;
  std::size_t total = 0;
  for (const auto& w : workers) {
    if ((w.rank % 2 == 0) != primary) continue;
    const double weight = static_cast<double>(w.tape.batch_size);
    if (sum.empty()) {
      for (const auto& g : w.tape.grads) sum.push_back(g * weight);
    } else {
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = axpy(sum[i], weight, w.tape.grads[i]);
    }
    total += w.tape.batch_size;
  }
  for (auto& g : sum) g *= 1.0 / static_cast<double>(total);
  return sum;
}

}  // namespace

void ClusterTopology::validate(std::size_t batch_size) const {
  if (workers < 2) throw Error(ErrorKind::kInvalidParam, "topology needs at least 2 workers");
  if (shards.size() != workers) throw Error(ErrorKind::kInvalidParam, "topology needs one shard per worker");
  std::vector<char> seen(batch_size, 0);
  std::size_t count = 0;
  for (std::size_t j = 0; j < workers; ++j) {
    if (shards[j].empty()) throw Error(ErrorKind::kEmptyShard, "worker " + std::to_string(j) + " has an empty shard");
    for (std::size_t row : shards[j]) {
      if (row >= batch_size || seen[row]) {
        throw Error(ErrorKind::kDimensionMismatch, "shards do not partition the global batch");
      }
      seen[row] = 1;
      ++count;
    }
  }
  if (count != batch_size) throw Error(ErrorKind::kDimensionMismatch, "shards do not cover the global batch");
}

std::vector<std::size_t> ClusterTopology::group_rows(bool primary) const {
  std::vector<std::size_t> rows;
  for (std::size_t j = 0; j < shards.size(); ++j) {
    if (is_primary(j) == primary) rows.insert(rows.end(), shards[j].begin(), shards[j].end());
  }
  return rows;
}

ClusterTopology ClusterTopology::from_halves(std::size_t workers, std::span<const std::size_t> first,
                                             std::span<const std::size_t> second) {
  if (workers < 2) throw Error(ErrorKind::kInvalidParam, "topology needs at least 2 workers");
  ClusterTopology topo;
  topo.workers = workers;
  topo.shards.resize(workers);
  const std::size_t n_primary = (workers + 1) / 2;
  const std::size_t n_secondary = workers / 2;
  auto deal = [&](std::span<const std::size_t> rows, std::size_t members, std::size_t first_rank) {
    for (std::size_t m = 0; m < members; ++m) {
      const std::size_t lo = rows.size() * m / members;
      const std::size_t hi = rows.size() * (m + 1) / members;
      if (lo == hi) throw Error(ErrorKind::kEmptyShard, "too few samples for the requested worker count");
      auto& shard = topo.shards[first_rank + 2 * m];
      shard.assign(rows.begin() + static_cast<std::ptrdiff_t>(lo), rows.begin() + static_cast<std::ptrdiff_t>(hi));
    }
  };
  deal(first, n_primary, 0);
  deal(second, n_secondary, 1);
  return topo;
}

const char* to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::kFactorSend: return "factor_send";
    case MessageKind::kAllreduceG1: return "allreduce_g1";
    case MessageKind::kAllreduceG2: return "allreduce_g2";
    case MessageKind::kBroadcastUpdate: return "broadcast_update";
  }
  return "unknown";
}

void MessageLog::write_csv(std::ostream& out) const {
  out << "step,kind,layer,elements\n";
  for (const auto& r : records) {
    out << r.step << ',' << to_string(r.kind) << ',';
    if (r.layer) {
      out << *r.layer;
    } else {
      out << -1;
    }
    out << ',' << r.elements << '\n';
  }
}

std::size_t factor_send_elements(const DenseLayer& layer, std::size_t workers) {
  const std::size_t in = layer.weights.cols();
  const std::size_t out = layer.weights.rows();
  return (workers - 1) * (in * in + out * out);
}

SimulationStep simulate_fop_step(Model& model, const Matrix& x, std::span<const int> labels,
                                 const ClusterTopology& topology, const OptimizerConfig& cfg,
                                 OptimizerState& state, MessageLog& log) {
  topology.validate(x.rows());
  const std::size_t n_layers = model.num_layers();
  if (state.blocks.size() != n_layers) {
    throw Error(ErrorKind::kInvalidParam, "simulate_fop_step: optimizer state has no Fisher blocks for this model");
  }
  const std::size_t step = state.step;

  // Local back-prop on every worker.
  std::vector<Worker> workers(topology.workers);
  for (std::size_t j = 0; j < topology.workers; ++j) {
    workers[j].rank = j;
    workers[j].data = gather_rows(x, labels, topology.shards[j]);
    workers[j].tape = loss_and_backward(model, workers[j].data.features, workers[j].data.labels);
  }

  // Curvature: every worker ships its local factor statistics of layer i to
  // the specialist, which merges them and updates/inverts its block.
  if (cfg.curvature.accumulates_at(step)) {
    for (std::size_t i = 0; i < n_layers; ++i) {
      const std::size_t k = topology.specialist(i);
      for (auto& w : workers) {
        workers[k].inbox[i].push_back(batch_statistics(w.tape.inputs[i], w.tape.preact_grads[i]));
      }
      log.records.push_back({step, MessageKind::kFactorSend, i, factor_send_elements(model.layer(i), topology.workers)});
    }
  }
  for (auto& specialist : workers) {
    for (auto& [layer, received] : specialist.inbox) {
      state.blocks[layer].accumulate(merge_statistics(received), step);
    }
    for (std::size_t i = 0; i < n_layers; ++i) {
      if (topology.specialist(i) != specialist.rank) continue;
      if (cfg.curvature.refreshes_at(step) || !state.blocks[i].has_inverse()) {
        state.blocks[i].refresh_inverse(cfg.damping, step);
      }
    }
  }

  // Dual-gradient reduction over the two groups.
  const std::vector<Matrix> g1 = group_allreduce(workers, true);
  log.records.push_back({step, MessageKind::kAllreduceG1, std::nullopt, model.parameter_count()});
  const std::vector<Matrix> g2 = group_allreduce(workers, false);
  log.records.push_back({step, MessageKind::kAllreduceG2, std::nullopt, model.parameter_count()});

  // Each specialist computes and broadcasts its layers' updates.
  SimulationStep result;
  result.specialists.resize(n_layers);
  std::vector<Matrix> updates(n_layers);
  for (const auto& specialist : workers) {
    for (std::size_t i = 0; i < n_layers; ++i) {
      if (topology.specialist(i) != specialist.rank) continue;
      const GradientPair pair = make_gradient_pair(g1[i], g2[i], i);
      FopStepPlan plan = fop_layer_step(pair, state.blocks[i], state.lr, cfg.fop);
      updates[i] = plan.update;
      result.specialists[i] = specialist.rank;
      result.report.plans.push_back(std::move(plan));
    }
  }
  std::sort(result.report.plans.begin(), result.report.plans.end(),
            [](const FopStepPlan& a, const FopStepPlan& b) { return a.layer_id < b.layer_id; });
  for (std::size_t i = 0; i < n_layers; ++i) {
    log.records.push_back({step, MessageKind::kBroadcastUpdate, i, updates[i].size()});
  }

  double loss_sum = 0.0;
  for (const auto& w : workers) {
    loss_sum += w.tape.loss * static_cast<double>(w.tape.batch_size);
    result.report.correct += w.tape.correct;
    result.report.batch_size += w.tape.batch_size;
  }
  result.report.loss = loss_sum / static_cast<double>(result.report.batch_size);

  apply_second_order_updates(model, std::move(updates), cfg, state);
  ++state.step;
  return result;
}

std::vector<CommVolumeRow> comm_volume_report(const MessageLog& log) {
  std::map<std::size_t, CommVolumeRow> rows;
  for (const auto& r : log.records) {
    auto& row = rows[r.step];
    row.step = r.step;
    switch (r.kind) {
      case MessageKind::kFactorSend: row.factor_send += r.elements; break;
      case MessageKind::kAllreduceG1: row.allreduce_g1 += r.elements; break;
      case MessageKind::kAllreduceG2: row.allreduce_g2 += r.elements; break;
      case MessageKind::kBroadcastUpdate: row.broadcast_update += r.elements; break;
    }
  }
  std::vector<CommVolumeRow> out;
  out.reserve(rows.size());
  for (const auto& [step, row] : rows) out.push_back(row);
  return out;
}

}  // namespace fopkit
