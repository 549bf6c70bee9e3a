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

#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "fopkit/nn.hpp"
#include "fopkit/optim.hpp"

namespace fopkit {

/// Logical worker set for the dual-gradient protocol. Even ranks form the
/// primary group (g1), odd ranks the secondary group (g2); layer i is owned
/// by specialist i mod N. shards[j] lists the global-batch rows of worker j.
struct ClusterTopology {
  std::size_t workers = 0;
  std::vector<std::vector<std::size_t>> shards;

  bool is_primary(std::size_t rank) const noexcept { return rank % 2 == 0; }
  std::size_t specialist(std::size_t layer) const noexcept { return layer % workers; }

  // Throws kInvalidParam (N < 2, shard count), kEmptyShard, or kDimensionMismatch
  // when shards do not partition [0, batch_size).
  void validate(std::size_t batch_size) const;

  // Rows of the primary (or secondary) group in rank order.
  std::vector<std::size_t> group_rows(bool primary) const;

  /// Deals `first` over the even ranks and `second` over the odd ranks in
  /// contiguous chunks, so the group unions are exactly the two halves.
  static ClusterTopology from_halves(std::size_t workers, std::span<const std::size_t> first,
                                     std::span<const std::size_t> second);
};

enum class MessageKind { kFactorSend, kAllreduceG1, kAllreduceG2, kBroadcastUpdate };

const char* to_string(MessageKind kind);

struct MessageRecord {
  std::size_t step = 0;
  MessageKind kind = MessageKind::kFactorSend;
  std::optional<std::size_t> layer;
  std::size_t elements = 0;

  bool operator==(const MessageRecord&) const = default;
};

struct MessageLog {
  std::vector<MessageRecord> records;

  // Header "step,kind,layer,elements"; an absent layer is written as -1.
  void write_csv(std::ostream& out) const;
};

struct SimulationStep {
  StepReport report;
  std::vector<std::size_t> specialists;  // owner of each layer's plan
};

/// One step of the distributed protocol, executed worker by worker in rank
/// order. Appends this step's messages to `log`.
SimulationStep simulate_fop_step(Model& model, const Matrix& x, std::span<const int> labels,
                                 const ClusterTopology& topology, const OptimizerConfig& cfg,
                                 OptimizerState& state, MessageLog& log);

struct CommVolumeRow {
  std::size_t step = 0;
  std::size_t factor_send = 0;
  std::size_t allreduce_g1 = 0;
  std::size_t allreduce_g2 = 0;
  std::size_t broadcast_update = 0;

  std::size_t total() const noexcept { return factor_send + allreduce_g1 + allreduce_g2 + broadcast_update; }
};

/// Element totals per message kind per step, ascending by step.
std::vector<CommVolumeRow> comm_volume_report(const MessageLog& log);

/// Element count of the factor messages one layer of a model generates on a
/// curvature step: (N - 1) senders x ((in+1)^2 + out^2).
std::size_t factor_send_elements(const DenseLayer& layer, std::size_t workers);

}  // namespace fopkit
