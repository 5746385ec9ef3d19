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

// Named-tensor checkpoint file.
//
//   "DUET" | version u16 | tensor count u32 |
//   per tensor: name length u16 | UTF-8 name | rank u8 | dims u32 x rank |
//               payload f32 x prod(dims), row-major
//
// All integers and floats little-endian. A rank-0 tensor holds one float.
// Text records (config echo, step counter) are rank-1 tensors whose floats
// are the record's byte values.

#ifndef DUET_CHECKPOINT_HPP_
#define DUET_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "duet/tensor.hpp"

namespace duet {

inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kVersion, kTruncated, kCorrupt, kMissing };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  static NamedTensor from(std::string name, const Tensor& t);
  static NamedTensor scalar(std::string name, float v);
  static NamedTensor text(std::string name, const std::string& value);

  Tensor tensor() const;  // rank 0..2 only
  std::string as_text() const;
};

std::vector<std::uint8_t> encode_tensor_table(std::span<const NamedTensor> tensors);
// All-or-nothing: throws CheckpointError without returning partial tables.
std::vector<NamedTensor> decode_tensor_table(std::span<const std::uint8_t> bytes);

void write_tensor_table(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_tensor_table(const std::filesystem::path& path);

}  // namespace duet

#endif  // DUET_CHECKPOINT_HPP_
