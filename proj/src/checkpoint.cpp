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

#include "fopkit/checkpoint.hpp"

#include <cstring>
#include <optional>

#include "fopkit/binary_io.hpp"
#include "fopkit/error.hpp"

namespace fopkit {
namespace {

void put_optional(BinaryWriter& w, std::optional<std::size_t> v) {
  w.put_u8(v.has_value() ? 1 : 0);
  w.put_u64(v.value_or(0));
}

std::optional<std::size_t> get_optional(BinaryReader& r) {
  const bool present = r.get_u8() != 0;
  const std::uint64_t v = r.get_u64();
  return present ? std::optional<std::size_t>(v) : std::nullopt;
}

void put_matrices(BinaryWriter& w, const std::vector<Matrix>& ms) {
  w.put_u64(ms.size());
  for (const auto& m : ms) w.put_matrix(m);
}

std::size_t get_count(BinaryReader& r, std::size_t limit, const char* what) {
  const std::uint64_t n = r.get_u64();
  if (n > limit) throw Error(ErrorKind::kCorruptCheckpoint, std::string("implausible ") + what + " count");
  return static_cast<std::size_t>(n);
}

std::vector<Matrix> get_matrices(BinaryReader& r) {
  std::vector<Matrix> ms(get_count(r, 1 << 16, "matrix"));
  for (auto& m : ms) m = r.get_matrix();
  return ms;
}

bool get_flag(BinaryReader& r) {
  const auto v = r.get_u8();
  if (v > 1) throw Error(ErrorKind::kCorruptCheckpoint, "bad boolean byte");
  return v == 1;
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  BinaryWriter w;
  w.put_raw(std::span(reinterpret_cast<const unsigned char*>(kCheckpointMagic), sizeof(kCheckpointMagic)));
  w.put_u32(kCheckpointVersion);
  w.put_u64(ckpt.epoch);

  w.put_u64(ckpt.model.num_layers());
  for (const auto& layer : ckpt.model.layers()) {
    w.put_u8(static_cast<std::uint8_t>(layer.activation));
    w.put_matrix(layer.weights);
  }

  const auto& s = ckpt.state;
  w.put_u8(static_cast<std::uint8_t>(ckpt.kind));
  w.put_u64(s.step);
  w.put_f64(s.lr);
  w.put_u64(s.adam_t);
  put_matrices(w, s.velocity);
  put_matrices(w, s.adam_m);
  put_matrices(w, s.adam_v);

  w.put_u64(s.blocks.size());
  for (const auto& b : s.blocks) {
    w.put_u64(b.layer_id());
    w.put_f64(b.ema_decay());
    w.put_matrix(b.a());
    w.put_matrix(b.g());
    w.put_u8(b.has_statistics() ? 1 : 0);
    w.put_u64(b.factor_version());
    put_optional(w, b.last_factor_step());
    put_optional(w, b.last_inverse_step());
    w.put_u8(b.has_inverse() ? 1 : 0);
    if (b.has_inverse()) {
      w.put_matrix(b.inverse_source_a());
      w.put_matrix(b.inverse_source_g());
      w.put_f64(b.damping());
      w.put_u64(b.inverse_factor_version());
    }
  }

  w.put_f64(ckpt.scheduler_lr);
  w.put_f64(ckpt.scheduler_best);
  w.put_u64(ckpt.scheduler_bad_epochs);

  std::vector<unsigned char> bytes = w.bytes();
  BinaryWriter tail;
  tail.put_u64(fnv1a64(bytes));
  bytes.insert(bytes.end(), tail.bytes().begin(), tail.bytes().end());
  return bytes;
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw Error(ErrorKind::kCorruptCheckpoint, "not a fopkit checkpoint (bad magic)");
  }
  BinaryReader r(bytes);
  r.get_raw(sizeof(kCheckpointMagic));
  const std::uint32_t version = r.get_u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kUnsupportedVersion, "checkpoint version " + std::to_string(version) +
                                                    " is not supported (expected " +
                                                    std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < 8 + 4 + 8) throw Error(ErrorKind::kTruncatedFile, "checkpoint too short");
  const auto body = bytes.first(bytes.size() - 8);
  BinaryReader in(body);
  in.get_raw(12);
  Checkpoint ckpt;
  ckpt.epoch = in.get_u64();

  std::vector<DenseLayer> layers(get_count(in, 1 << 12, "layer"));
  for (auto& layer : layers) {
    const auto act = in.get_u8();
    if (act > static_cast<std::uint8_t>(Activation::kIdentity)) {
      throw Error(ErrorKind::kCorruptCheckpoint, "unknown activation code");
    }
    layer.activation = static_cast<Activation>(act);
    layer.weights = in.get_matrix();
  }
  try {
    ckpt.model = Model(std::move(layers));
  } catch (const Error& e) {
    throw Error(ErrorKind::kCorruptCheckpoint, std::string("inconsistent model: ") + e.what());
  }

  const auto kind = in.get_u8();
  if (kind > static_cast<std::uint8_t>(OptimizerKind::kFop)) {
    throw Error(ErrorKind::kCorruptCheckpoint, "unknown optimizer code");
  }
  ckpt.kind = static_cast<OptimizerKind>(kind);
  auto& s = ckpt.state;
  s.step = in.get_u64();
  s.lr = in.get_f64();
  s.adam_t = in.get_u64();
  s.velocity = get_matrices(in);
  s.adam_m = get_matrices(in);
  s.adam_v = get_matrices(in);

  s.blocks.resize(get_count(in, 1 << 12, "block"));
  for (auto& b : s.blocks) {
    const auto layer_id = in.get_u64();
    const double ema = in.get_f64();
    Matrix a = in.get_matrix();
    Matrix g = in.get_matrix();
    const bool has_stats = get_flag(in);
    const auto version = in.get_u64();
    const auto last_factor = get_optional(in);
    const auto last_inverse = get_optional(in);
    try {
      b = KroneckerFisherBlock(layer_id, a.rows(), g.rows(), ema);
      b.restore_state(layer_id, ema, std::move(a), std::move(g), has_stats, version, last_factor, last_inverse);
      if (get_flag(in)) {
        Matrix sa = in.get_matrix();
        Matrix sg = in.get_matrix();
        const double damping = in.get_f64();
        const auto inv_version = in.get_u64();
        b.restore_inverse(std::move(sa), std::move(sg), damping, inv_version);
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kTruncatedFile) throw;
      throw Error(ErrorKind::kCorruptCheckpoint, std::string("inconsistent Fisher block: ") + e.what());
    }
  }

  ckpt.scheduler_lr = in.get_f64();
  ckpt.scheduler_best = in.get_f64();
  ckpt.scheduler_bad_epochs = in.get_u64();
  if (in.remaining() != 0) throw Error(ErrorKind::kCorruptCheckpoint, "trailing bytes after checkpoint");
  BinaryReader tail(bytes.last(8));
  if (fnv1a64(body) != tail.get_u64()) throw Error(ErrorKind::kCorruptCheckpoint, "checkpoint checksum mismatch");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace fopkit
