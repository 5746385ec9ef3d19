/* Copyright 2026 The DUET Authors. All Rights Reserved.

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

#include "duet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "duet/bytes.hpp"

namespace duet {

NamedTensor NamedTensor::from(std::string name, const Tensor& t) {
  NamedTensor n;
  n.name = std::move(name);
  n.dims = {static_cast<std::uint32_t>(t.rows()), static_cast<std::uint32_t>(t.cols())};
  n.data.assign(t.data().begin(), t.data().end());
  return n;
}

NamedTensor NamedTensor::scalar(std::string name, float v) {
  NamedTensor n;
  n.name = std::move(name);
  n.data = {v};
  return n;
}

NamedTensor NamedTensor::text(std::string name, const std::string& value) {
  NamedTensor n;
  n.name = std::move(name);
  n.dims = {static_cast<std::uint32_t>(value.size())};
  for (unsigned char c : value) n.data.push_back(static_cast<float>(c));
  return n;
}

Tensor NamedTensor::tensor() const {
  switch (dims.size()) {
    case 0:
      return Tensor(1, 1, data);
    case 1:
      return Tensor(1, dims[0], data);
    case 2:
      return Tensor(dims[0], dims[1], data);
    default:
      throw CheckpointError(CheckpointError::Kind::kCorrupt,
                            "checkpoint: tensor '" + name + "' has rank " + std::to_string(dims.size()));
  }
}

std::string NamedTensor::as_text() const {
  std::string s;
  for (float v : data) s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  return s;
}

std::vector<std::uint8_t> encode_tensor_table(std::span<const NamedTensor> tensors) {
  ByteWriter w;
  w.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("DUET"), 4));
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (t.name.size() > UINT16_MAX) throw std::invalid_argument("checkpoint: tensor name too long");
    if (t.dims.size() > UINT8_MAX) throw std::invalid_argument("checkpoint: rank too large");
    std::size_t count = 1;
    for (std::uint32_t d : t.dims) count *= d;
    if (count != t.data.size()) {
      throw ShapeError("checkpoint: tensor '" + t.name + "' payload does not match its dims");
    }
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(t.name.data()), t.name.size()));
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) w.u32(d);
    for (float v : t.data) w.f32(v);
  }
  return w.take();
}

std::vector<NamedTensor> decode_tensor_table(std::span<const std::uint8_t> bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "DUET", 4) != 0) {
    throw CheckpointError(Kind::kBadMagic, "checkpoint: bad magic (expected \"DUET\")");
  }
  ByteReader r(bytes.subspan(4));
  try {
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion) {
      throw CheckpointError(Kind::kVersion, "checkpoint: unsupported version " + std::to_string(version) +
                                                " (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint32_t count = r.u32();
    std::vector<NamedTensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
      NamedTensor t;
      const std::uint16_t len = r.u16();
      auto name = r.bytes(len);
      t.name.assign(name.begin(), name.end());
      const std::uint8_t rank = r.u8();
      std::uint64_t n = 1;
      for (std::uint8_t k = 0; k < rank; ++k) {
        t.dims.push_back(r.u32());
        const std::uint64_t d = t.dims.back();
        n = (d != 0 && n > UINT64_MAX / d) ? UINT64_MAX : n * d;
      }
      if (n > r.remaining() / 4) {
        throw CheckpointError(Kind::kTruncated, "checkpoint: tensor '" + t.name + "' payload is truncated");
      }
      t.data.resize(static_cast<std::size_t>(n));
      for (float& v : t.data) v = r.f32();
      out.push_back(std::move(t));
    }
    if (r.remaining() != 0) {
      throw CheckpointError(Kind::kCorrupt, "checkpoint: " + std::to_string(r.remaining()) +
                                                " trailing bytes after the last tensor");
    }
    return out;
  } catch (const TruncatedInput&) {
    throw CheckpointError(Kind::kTruncated, "checkpoint: file is truncated");
  }
}

void write_tensor_table(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  const std::vector<std::uint8_t> bytes = encode_tensor_table(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "checkpoint: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "checkpoint: write failed for " + path.string());
}

std::vector<NamedTensor> read_tensor_table(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw CheckpointError(CheckpointError::Kind::kMissing, "checkpoint: no such file " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "checkpoint: cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor_table(bytes);
}

}  // namespace duet
