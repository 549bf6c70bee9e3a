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

#include "fopkit/binary_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "fopkit/error.hpp"

namespace fopkit {

void BinaryWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void BinaryWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void BinaryWriter::put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::put_matrix(const Matrix& m) {
  put_u64(m.rows());
  put_u64(m.cols());
  for (double x : m.data()) put_f64(x);
}

std::span<const unsigned char> BinaryReader::get_raw(std::size_t n) {
  if (remaining() < n) {
    throw Error(ErrorKind::kTruncatedFile, "unexpected end of data at byte " + std::to_string(pos_));
  }
  auto out = bytes_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t BinaryReader::get_u8() { return get_raw(1)[0]; }

std::uint32_t BinaryReader::get_u32() {
  auto b = get_raw(4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

std::uint64_t BinaryReader::get_u64() {
  auto b = get_raw(8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

double BinaryReader::get_f64() { return std::bit_cast<double>(get_u64()); }

Matrix BinaryReader::get_matrix(std::size_t max_entries) {
  const std::uint64_t rows = get_u64();
  const std::uint64_t cols = get_u64();
  if (rows != 0 && cols > max_entries / rows) {
    throw Error(ErrorKind::kCorruptCheckpoint, "matrix header claims " + std::to_string(rows) + "x" +
                                                   std::to_string(cols) + " entries");
  }
  if (remaining() / 8 < rows * cols) throw Error(ErrorKind::kTruncatedFile, "matrix data truncated");
  Matrix m(rows, cols);
  for (double& x : m.data()) x = get_f64();
  return m;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace fopkit
