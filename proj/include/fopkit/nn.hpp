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
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "fopkit/linalg.hpp"

namespace fopkit {

enum class Activation { kRelu, kIdentity };

Activation parse_activation(std::string_view name);
const char* to_string(Activation activation);

/// Fully connected layer. weights is out x (in+1); the last column holds the
/// bias, which multiplies a constant-1 input coordinate.
struct DenseLayer {
  Matrix weights;
  Activation activation = Activation::kIdentity;

  std::size_t in_features() const noexcept { return weights.cols() - 1; }
  std::size_t out_features() const noexcept { return weights.rows(); }

  bool operator==(const DenseLayer&) const = default;
};

/// Feed-forward network. Layer widths chain and the last layer is linear
/// (it produces logits).
class Model {
 public:
  Model() = default;
  explicit Model(std::vector<DenseLayer> layers);

  // widths = {in, hidden..., classes}. Kaiming-uniform weights with bound
  // sqrt(6 / fan_in), zero biases.
  static Model mlp(std::span<const std::size_t> widths, Activation hidden, std::uint64_t seed);

  std::size_t num_layers() const noexcept { return layers_.size(); }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  DenseLayer& layer(std::size_t i) { return layers_.at(i); }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  // Flattened view of every weight matrix in layer order, row-major.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> theta);

  bool operator==(const Model&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

/// Per-layer captures of one forward/backward pass.
struct BatchTape {
  std::vector<Matrix> inputs;        // batch x (in+1), last column = 1
  std::vector<Matrix> preact_grads;  // batch x out, per-sample dLoss_i/dz
  std::vector<Matrix> grads;         // out x (in+1), gradient of the mean loss
  double loss = 0.0;                 // mean softmax cross-entropy
  std::size_t batch_size = 0;
  std::size_t correct = 0;           // argmax hits

  double accuracy() const {
    return batch_size == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(batch_size);
  }
};

Matrix forward(const Model& model, const Matrix& x);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean cross-entropy and accuracy without capturing a tape.
Evaluation evaluate(const Model& model, const Matrix& x, std::span<const int> labels);

BatchTape loss_and_backward(const Model& model, const Matrix& x, std::span<const int> labels);

struct SubBatch {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // rows of the source batch
};

/// Deterministic seeded split into two disjoint halves; the first receives
/// the extra sample of an odd batch.
std::pair<SubBatch, SubBatch> split_batch(const Matrix& x, std::span<const int> labels, std::uint64_t seed);

/// Rows of x (and labels) selected by indices, in order.
SubBatch gather_rows(const Matrix& x, std::span<const int> labels, std::span<const std::size_t> indices);

/// theta <- theta - d for every layer.
void apply_update(Model& model, std::span<const Matrix> updates);

}  // namespace fopkit
