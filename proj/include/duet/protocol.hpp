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

// Device-cloud wire format. Every frame is
//
//   length u32 | type u8 | session id u64 | payload
//
// where length counts type + session id + payload (so length = 9 + payload).
// Integers and floats are little-endian; floats are IEEE binary32.
//
//   0x01 UploadSamples    count u32, item ids u32 x count
//   0x02 UploadEmbedding  width u32, floats x width
//   0x10 DownloadParams   layer count u8; per layer n_in u32, n_out u32,
//                         kernel floats (row-major), bias floats
//   0x7F Error            UTF-8 message (may be empty)

#ifndef DUET_PROTOCOL_HPP_
#define DUET_PROTOCOL_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "duet/model.hpp"
#include "duet/tensor.hpp"

namespace duet {

class ProtocolError : public std::runtime_error {
 public:
  enum class Kind { kTruncated, kLengthMismatch, kUnknownType, kMalformed, kInvalid };
  ProtocolError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class MessageType : std::uint8_t {
  kUploadSamples = 0x01,
  kUploadEmbedding = 0x02,
  kDownloadParams = 0x10,
  kError = 0x7F,
};

inline constexpr std::size_t kFrameHeaderBytes = 13;

struct UploadSamples {
  std::vector<std::uint32_t> items;
  friend bool operator==(const UploadSamples&, const UploadSamples&) = default;
};
struct UploadEmbedding {
  Tensor shared;  // 1 x C_s
};
struct DownloadParams {
  DynamicParams params;  // decodes with provenance kGenerated
};
struct ErrorMessage {
  std::string message;
  friend bool operator==(const ErrorMessage&, const ErrorMessage&) = default;
};

struct WireMessage {
  std::uint64_t session = 0;
  std::variant<UploadSamples, UploadEmbedding, DownloadParams, ErrorMessage> body;

  MessageType type() const;
};

// Bitwise equality of everything carried on the wire (floats by bit
// pattern; provenance is not transmitted).
bool bit_equal(const WireMessage& a, const WireMessage& b);

// Throws ProtocolError(kInvalid) for an empty context, a non-row embedding,
// or more than 255 layers.
std::vector<std::uint8_t> encode(const WireMessage& msg);
// The span must hold exactly one frame.
WireMessage decode(std::span<const std::uint8_t> frame);

WireMessage make_upload_samples(std::uint64_t session, std::span<const std::uint32_t> context);
WireMessage make_upload_embedding(std::uint64_t session, const Tensor& shared);
WireMessage make_download_params(std::uint64_t session, DynamicParams params);
WireMessage make_error(std::uint64_t session, std::string message);

// Exact on-wire size including the 13-byte header, computed without encoding.
std::size_t payload_size(const WireMessage& msg);

// Total frame length announced by a header prefix, or nullopt if fewer than
// 4 bytes are available.
std::optional<std::size_t> peek_frame_size(std::span<const std::uint8_t> prefix);

struct BandwidthProfile {
  std::string name;
  double bytes_per_second = 0.0;  // decimal: 1 MB/s = 1e6 B/s

  // Throws std::invalid_argument for a non-positive rate.
  static BandwidthProfile make(std::string name, double bytes_per_second);
  // "4g-5", "4g-15", "5g-50", "5g-100" (MB/s).
  static BandwidthProfile preset(const std::string& name);
  static std::vector<std::string> preset_names();
};

// Serialization delay in seconds: size / rate.
double transfer_delay(double size_bytes, const BandwidthProfile& profile);

}  // namespace duet

#endif  // DUET_PROTOCOL_HPP_
