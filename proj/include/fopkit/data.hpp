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
#include <string>
#include <vector>

#include "fopkit/linalg.hpp"

namespace fopkit {

struct Dataset {
  Matrix features;          // n x d
  std::vector<int> labels;  // n entries in [0, classes)
  std::size_t classes = 0;
  std::string provenance;

  std::size_t size() const noexcept { return labels.size(); }
  void validate() const;
};

/// Isotropic Gaussian clusters around centers drawn uniformly from [-1, 1]^d.
Dataset gen_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double spread, std::uint64_t seed);

/// Interleaved 2-D spirals. Point i of class k sits at radius r = i / per_class
/// and angle 2 pi k / classes + turns * 2 pi r, plus Gaussian noise.
inline constexpr double kSpiralTurns = 1.0;
Dataset gen_spirals(std::size_t classes, std::size_t per_class, double noise, std::uint64_t seed,
                    double turns = kSpiralTurns);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled by 1/255; classes = 1 + max label.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes features as unsigned bytes round(255 x) with image shape
/// rows x cols (rows * cols must equal the feature count). Features must lie
/// in [0, 1]; values on the k/255 grid round-trip exactly.
void write_idx(const Dataset& data, std::size_t rows, std::size_t cols, const std::filesystem::path& images,
               const std::filesystem::path& labels);

}  // namespace fopkit
