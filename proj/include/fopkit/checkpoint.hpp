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
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fopkit/nn.hpp"
#include "fopkit/optim.hpp"

namespace fopkit {

/// Everything needed to resume training exactly.
struct Checkpoint {
  std::size_t epoch = 0;  // completed epochs
  Model model;
  OptimizerKind kind = OptimizerKind::kSgd;
  OptimizerState state;
  double scheduler_lr = 0.0;
  double scheduler_best = 0.0;
  std::size_t scheduler_bad_epochs = 0;
};

inline constexpr char kCheckpointMagic[8] = {'F', 'O', 'P', 'K', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little-endian): magic, u32 version, u64 epoch, u64 layer count,
/// per layer {u8 activation, u64 rows, u64 cols, f64 weights}, optimizer
/// kind and state, Fisher blocks with their inverse snapshots, scheduler
/// state, and a trailing FNV-1a 64 checksum of all preceding bytes.
std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);

/// Throws kCorruptCheckpoint (magic, checksum, structure), kUnsupportedVersion
/// or kTruncatedFile.
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fopkit
