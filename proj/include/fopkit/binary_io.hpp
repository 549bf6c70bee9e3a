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
#include <string>
#include <vector>

#include "fopkit/linalg.hpp"

namespace fopkit {

/// Little-endian byte sink.
class BinaryWriter {
 public:
  void put_u8(std::uint8_t v) { bytes_.push_back(v); }
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_f64(double v);
  void put_raw(std::span<const unsigned char> raw) { bytes_.insert(bytes_.end(), raw.begin(), raw.end()); }
  // rows (u64), cols (u64), then rows*cols f64 in row-major order.
  void put_matrix(const Matrix& m);

  const std::vector<unsigned char>& bytes() const noexcept { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

/// Little-endian byte source. Reads past the end throw kTruncatedFile.
class BinaryReader {
 public:
  explicit BinaryReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::uint8_t get_u8();
  std::uint32_t get_u32();
  std::uint64_t get_u64();
  double get_f64();
  std::span<const unsigned char> get_raw(std::size_t n);
  // Rejects matrices larger than max_entries (guards corrupt headers).
  Matrix get_matrix(std::size_t max_entries = std::size_t{1} << 28);

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);

}  // namespace fopkit
