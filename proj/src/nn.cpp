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

#include "fopkit/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fopkit/error.hpp"
#include "fopkit/rng.hpp"

namespace fopkit {
namespace {

Matrix with_bias_column(const Matrix& h) {
  Matrix out(h.rows(), h.cols() + 1);
  for (std::size_t r = 0; r < h.rows(); ++r) {
    auto src = h.row(r);
    auto dst = out.row(r);
    std::copy(src.begin(), src.end(), dst.begin());
    dst[h.cols()] = 1.0;
  }
  return out;
}

void activate(Matrix& z, Activation act) {
  if (act == Activation::kRelu) {
    for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
  }
}

void check_input(const Model& model, const Matrix& x) {
  if (model.num_layers() == 0) throw Error(ErrorKind::kInvalidParam, "model has no layers");
  if (x.cols() != model.input_dim()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "forward: input has " + std::to_string(x.cols()) + " features, model expects " +
                    std::to_string(model.input_dim()));
  }
}

void check_labels(const Model& model, const Matrix& x, std::span<const int> labels) {
  if (labels.size() != x.rows()) {
    throw Error(ErrorKind::kDimensionMismatch, "label count does not match batch size");
  }
  if (x.rows() == 0) throw Error(ErrorKind::kBatchTooSmall, "empty batch");
  const auto classes = static_cast<int>(model.output_dim());
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw Error(ErrorKind::kInvalidLabel,
                  "label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

// Per-row log-softmax cross-entropy; optionally writes softmax - onehot.
double cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix* grad, std::size_t* correct) {
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    const auto top = std::max_element(z.begin(), z.end());
    const double zmax = *top;
    if (static_cast<int>(top - z.begin()) == labels[r]) ++hits;
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double log_sum = std::log(sum);
    total += -(z[static_cast<std::size_t>(labels[r])] - zmax - log_sum);
    if (grad != nullptr) {
      auto g = grad->row(r);
      for (std::size_t c = 0; c < z.size(); ++c) g[c] = std::exp(z[c] - zmax - log_sum);
      g[static_cast<std::size_t>(labels[r])] -= 1.0;
    }
  }
  if (correct != nullptr) *correct = hits;
  return total / static_cast<double>(logits.rows());
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity" || name == "linear") return Activation::kIdentity;
  throw Error(ErrorKind::kInvalidParam, "unknown activation '" + std::string(name) + "'");
}

const char* to_string(Activation activation) {
  return activation == Activation::kRelu ? "relu" : "identity";
}

Model::Model(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw Error(ErrorKind::kInvalidParam, "Model: no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].weights.cols() < 1 || layers_[i].weights.rows() < 1) {
      throw Error(ErrorKind::kInvalidParam, "Model: empty layer " + std::to_string(i));
    }
    if (i > 0 && layers_[i].in_features() != layers_[i - 1].out_features()) {
      throw Error(ErrorKind::kDimensionMismatch, "Model: layer " + std::to_string(i) + " does not chain");
    }
  }
  if (layers_.back().activation != Activation::kIdentity) {
    throw Error(ErrorKind::kInvalidParam, "Model: final layer must be linear");
  }
}

Model Model::mlp(std::span<const std::size_t> widths, Activation hidden, std::uint64_t seed) {
  if (widths.size() < 2) throw Error(ErrorKind::kInvalidParam, "Model::mlp: need at least input and output widths");
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t fan_in = widths[i];
    const std::size_t out = widths[i + 1];
    if (fan_in == 0 || out == 0) throw Error(ErrorKind::kInvalidParam, "Model::mlp: zero width");
    DenseLayer layer;
    layer.weights = Matrix(out, fan_in + 1);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t r = 0; r < out; ++r)
      for (std::size_t c = 0; c < fan_in; ++c) layer.weights(r, c) = rng.uniform(-bound, bound);
    layer.activation = i + 2 == widths.size() ? Activation::kIdentity : hidden;
    layers.push_back(std::move(layer));
  }
  return Model(std::move(layers));
}

std::size_t Model::input_dim() const { return layers_.front().in_features(); }
std::size_t Model::output_dim() const { return layers_.back().out_features(); }

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size();
  return n;
}

std::vector<double> Model::parameters() const {
  std::vector<double> theta;
  theta.reserve(parameter_count());
  for (const auto& l : layers_) theta.insert(theta.end(), l.weights.data().begin(), l.weights.data().end());
  return theta;
}

void Model::set_parameters(std::span<const double> theta) {
  if (theta.size() != parameter_count()) {
    throw Error(ErrorKind::kDimensionMismatch, "set_parameters: wrong parameter count");
  }
  std::size_t k = 0;
  for (auto& l : layers_) {
    auto w = l.weights.data();
    std::copy(theta.begin() + static_cast<std::ptrdiff_t>(k),
              theta.begin() + static_cast<std::ptrdiff_t>(k + w.size()), w.begin());
    k += w.size();
  }
}

Matrix forward(const Model& model, const Matrix& x) {
  check_input(model, x);
  Matrix h = x;
  for (const auto& layer : model.layers()) {
    Matrix z = matmul(with_bias_column(h), transpose(layer.weights));
    activate(z, layer.activation);
    h = std::move(z);
  }
  return h;
}

Evaluation evaluate(const Model& model, const Matrix& x, std::span<const int> labels) {
  check_input(model, x);
  check_labels(model, x, labels);
  std::size_t correct = 0;
  const double loss = cross_entropy(forward(model, x), labels, nullptr, &correct);
  return {loss, static_cast<double>(correct) / static_cast<double>(x.rows())};
}

BatchTape loss_and_backward(const Model& model, const Matrix& x, std::span<const int> labels) {
  check_input(model, x);
  check_labels(model, x, labels);
  const std::size_t n_layers = model.num_layers();
  BatchTape tape;
  tape.batch_size = x.rows();
  tape.inputs.reserve(n_layers);
  std::vector<Matrix> preacts;
  preacts.reserve(n_layers);

  Matrix h = x;
  for (const auto& layer : model.layers()) {
    tape.inputs.push_back(with_bias_column(h));
    Matrix z = matmul(tape.inputs.back(), transpose(layer.weights));
    h = z;
    activate(h, layer.activation);
    preacts.push_back(std::move(z));
  }

  Matrix dz(h.rows(), h.cols());
  tape.loss = cross_entropy(h, labels, &dz, &tape.correct);

  tape.preact_grads.resize(n_layers);
  tape.grads.resize(n_layers);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& layer = model.layer(li);
    tape.grads[li] = matmul_tn(dz, tape.inputs[li]);
    tape.grads[li] *= inv_n;
    if (li > 0) {
      const Matrix dh_aug = matmul(dz, layer.weights);
      const std::size_t in = layer.in_features();
      Matrix next(dz.rows(), in);
      const Activation prev_act = model.layer(li - 1).activation;
      for (std::size_t r = 0; r < dz.rows(); ++r) {
        for (std::size_t c = 0; c < in; ++c) {
          const double pass = prev_act == Activation::kRelu ? (preacts[li - 1](r, c) > 0.0 ? 1.0 : 0.0) : 1.0;
          next(r, c) = dh_aug(r, c) * pass;
        }
      }
      tape.preact_grads[li] = std::move(dz);
      dz = std::move(next);
    } else {
      tape.preact_grads[li] = std::move(dz);
    }
  }
  return tape;
}

SubBatch gather_rows(const Matrix& x, std::span<const int> labels, std::span<const std::size_t> indices) {
  if (labels.size() != x.rows()) throw Error(ErrorKind::kDimensionMismatch, "gather_rows: label count mismatch");
  SubBatch out;
  out.features = Matrix(indices.size(), x.cols());
  out.labels.reserve(indices.size());
  out.indices.assign(indices.begin(), indices.end());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= x.rows()) throw Error(ErrorKind::kDimensionMismatch, "gather_rows: index out of range");
    auto src = x.row(indices[k]);
    std::copy(src.begin(), src.end(), out.features.row(k).begin());
    out.labels.push_back(labels[indices[k]]);
  }
  return out;
}

std::pair<SubBatch, SubBatch> split_batch(const Matrix& x, std::span<const int> labels, std::uint64_t seed) {
  const std::size_t n = x.rows();
  if (n < 2) throw Error(ErrorKind::kBatchTooSmall, "split_batch: need at least 2 samples");
  if (labels.size() != n) throw Error(ErrorKind::kDimensionMismatch, "split_batch: label count mismatch");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  const std::size_t first = (n + 1) / 2;
  std::vector<std::size_t> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(first));
  std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(first), order.end());
  return {gather_rows(x, labels, a), gather_rows(x, labels, b)};
}

void apply_update(Model& model, std::span<const Matrix> updates) {
  if (updates.size() != model.num_layers()) {
    throw Error(ErrorKind::kDimensionMismatch, "apply_update: one update per layer required");
  }
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (!updates[i].same_shape(model.layer(i).weights)) {
      throw Error(ErrorKind::kDimensionMismatch, "apply_update: shape mismatch in layer " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < updates.size(); ++i) model.layer(i).weights -= updates[i];
}

}  // namespace fopkit
