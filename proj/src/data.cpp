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

#include "fopkit/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "fopkit/error.hpp"
#include "fopkit/rng.hpp"

namespace fopkit {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::filesystem::path& path) {
  if (buf.size() < offset + 4) throw Error(ErrorKind::kTruncatedFile, path.string() + ": truncated header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> bytes = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes.data(), 4);
}

void require(bool ok, const char* message) {
  if (!ok) throw Error(ErrorKind::kInvalidParam, message);
}

}  // namespace

void Dataset::validate() const {
  if (labels.empty()) throw Error(ErrorKind::kInvalidParam, "dataset is empty");
  if (features.rows() != labels.size()) throw Error(ErrorKind::kDimensionMismatch, "dataset rows and labels differ");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw Error(ErrorKind::kInvalidLabel, "dataset label outside class range");
    }
  }
  if (!all_finite(features)) throw Error(ErrorKind::kInvalidParam, "dataset has non-finite features");
}

Dataset gen_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double spread, std::uint64_t seed) {
  require(classes >= 1 && per_class >= 1 && dim >= 1, "gen_blobs: counts must be >= 1");
  require(spread >= 0.0 && std::isfinite(spread), "gen_blobs: spread must be >= 0");
  Rng rng(seed);
  Matrix centers(classes, dim);
  for (double& c : centers.data()) c = rng.uniform(-1.0, 1.0);
  Dataset out;
  out.classes = classes;
  out.features = Matrix(classes * per_class, dim);
  out.labels.reserve(classes * per_class);
  std::size_t row = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      for (std::size_t j = 0; j < dim; ++j) out.features(row, j) = centers(k, j) + spread * rng.normal();
      out.labels.push_back(static_cast<int>(k));
    }
  }
  out.provenance = "blobs";
  return out;
}

Dataset gen_spirals(std::size_t classes, std::size_t per_class, double noise, std::uint64_t seed,
                    double turns) {
  require(classes >= 1 && per_class >= 1, "gen_spirals: counts must be >= 1");
  require(noise >= 0.0 && std::isfinite(noise), "gen_spirals: noise must be >= 0");
  require(turns > 0.0 && std::isfinite(turns), "gen_spirals: turns must be positive");
  Rng rng(seed);
  Dataset out;
  out.classes = classes;
  out.features = Matrix(classes * per_class, 2);
  out.labels.reserve(classes * per_class);
  const double two_pi = 2.0 * std::numbers::pi;
  std::size_t row = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      const double r = static_cast<double>(i) / static_cast<double>(per_class);
      const double t = two_pi * static_cast<double>(k) / static_cast<double>(classes) + turns * two_pi * r;
      const double nx = noise * rng.normal();
      const double ny = noise * rng.normal();
      out.features(row, 0) = r * std::cos(t) + nx;
      out.features(row, 1) = r * std::sin(t) + ny;
      out.labels.push_back(static_cast<int>(k));
    }
  }
  out.provenance = "spirals";
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_all(images);
  const auto lab = read_all(labels);
  if (read_be32(img, 0, images) != kImageMagic) throw Error(ErrorKind::kBadMagic, images.string() + ": bad magic");
  if (read_be32(lab, 0, labels) != kLabelMagic) throw Error(ErrorKind::kBadMagic, labels.string() + ": bad magic");
  const std::size_t n = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  const std::size_t n_labels = read_be32(lab, 4, labels);
  if (n != n_labels) {
    throw Error(ErrorKind::kCountMismatch,
                "idx: " + std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");
  }
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n * pixels) throw Error(ErrorKind::kTruncatedFile, images.string() + ": truncated pixel data");
  if (lab.size() < 8 + n) throw Error(ErrorKind::kTruncatedFile, labels.string() + ": truncated label data");

  Dataset out;
  out.features = Matrix(n, pixels);
  for (std::size_t i = 0; i < n * pixels; ++i) out.features.data()[i] = static_cast<double>(img[16 + i]) / 255.0;
  int max_label = 0;
  out.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.labels.push_back(static_cast<int>(lab[8 + i]));
    max_label = std::max(max_label, out.labels.back());
  }
  out.classes = static_cast<std::size_t>(max_label) + 1;
  out.provenance = "idx:" + images.filename().string();
  if (n == 0) throw Error(ErrorKind::kCountMismatch, "idx: file holds no items");
  return out;
}

void write_idx(const Dataset& data, std::size_t rows, std::size_t cols, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  data.validate();
  if (rows * cols != data.features.cols()) throw Error(ErrorKind::kDimensionMismatch, "write_idx: image shape mismatch");
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw Error(ErrorKind::kIo, "write_idx: cannot open output files");
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (double x : data.features.data()) {
    if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorKind::kInvalidParam, "write_idx: features must lie in [0, 1]");
    img.put(static_cast<char>(static_cast<unsigned char>(std::lround(x * 255.0))));
  }
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels) {
    if (y > 255) throw Error(ErrorKind::kInvalidParam, "write_idx: label does not fit in a byte");
    lab.put(static_cast<char>(static_cast<unsigned char>(y)));
  }
  if (!img || !lab) throw Error(ErrorKind::kIo, "write_idx: write failed");
}

}  // namespace fopkit
