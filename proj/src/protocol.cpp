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

#include "duet/protocol.hpp"

#include <cmath>

#include "duet/bytes.hpp"

namespace duet {

namespace {

using Kind = ProtocolError::Kind;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void check_body(const WireMessage& msg) {
  std::visit(Overloaded{
                 [](const UploadSamples& m) {
                   if (m.items.empty()) throw ProtocolError(Kind::kInvalid, "upload: empty context");
                 },
                 [](const UploadEmbedding& m) {
                   if (m.shared.rows() != 1 || m.shared.cols() == 0) {
                     throw ProtocolError(Kind::kInvalid,
                                         "upload: embedding must be 1 x C, got " + m.shared.shape().str());
                   }
                 },
                 [](const DownloadParams& m) {
                   if (m.params.layers.empty() || m.params.layers.size() > 255) {
                     throw ProtocolError(Kind::kInvalid, "download: layer count must be 1..255");
                   }
                   for (const DynamicLayer& l : m.params.layers) {
                     if (l.bias.rows() != 1 || l.bias.cols() != l.kernel.cols()) {
                       throw ProtocolError(Kind::kInvalid, "download: bias " + l.bias.shape().str() +
                                                               " does not fit kernel " + l.kernel.shape().str());
                     }
                   }
                 },
                 [](const ErrorMessage&) {},
             },
             msg.body);
}

std::size_t body_size(const WireMessage& msg) {
  return std::visit(Overloaded{
                        [](const UploadSamples& m) { return 4 + 4 * m.items.size(); },
                        [](const UploadEmbedding& m) { return 4 + 4 * m.shared.size(); },
                        [](const DownloadParams& m) {
                          std::size_t n = 1;
                          for (const DynamicLayer& l : m.params.layers) {
                            n += 8 + 4 * l.kernel.size() + 4 * l.bias.size();
                          }
                          return n;
                        },
                        [](const ErrorMessage& m) { return m.message.size(); },
                    },
                    msg.body);
}

}  // namespace

MessageType WireMessage::type() const {
  switch (body.index()) {
    case 0:
      return MessageType::kUploadSamples;
    case 1:
      return MessageType::kUploadEmbedding;
    case 2:
      return MessageType::kDownloadParams;
    default:
      return MessageType::kError;
  }
}

bool bit_equal(const WireMessage& a, const WireMessage& b) {
  if (a.session != b.session || a.body.index() != b.body.index()) return false;
  return std::visit(Overloaded{
                        [&](const UploadSamples& m) { return m == std::get<UploadSamples>(b.body); },
                        [&](const UploadEmbedding& m) {
                          return bit_equal(m.shared, std::get<UploadEmbedding>(b.body).shared);
                        },
                        [&](const DownloadParams& m) {
                          const DownloadParams& o = std::get<DownloadParams>(b.body);
                          return bit_equal(m.params, o.params);
                        },
                        [&](const ErrorMessage& m) { return m == std::get<ErrorMessage>(b.body); },
                    },
                    a.body);
}

std::vector<std::uint8_t> encode(const WireMessage& msg) {
  check_body(msg);
  const std::size_t body = body_size(msg);
  if (9 + body > UINT32_MAX) throw ProtocolError(Kind::kInvalid, "frame exceeds 4 GiB");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(9 + body));
  w.u8(static_cast<std::uint8_t>(msg.type()));
  w.u64(msg.session);
  std::visit(Overloaded{
                 [&](const UploadSamples& m) {
                   w.u32(static_cast<std::uint32_t>(m.items.size()));
                   for (std::uint32_t id : m.items) w.u32(id);
                 },
                 [&](const UploadEmbedding& m) {
                   w.u32(static_cast<std::uint32_t>(m.shared.size()));
                   for (float v : m.shared.data()) w.f32(v);
                 },
                 [&](const DownloadParams& m) {
                   w.u8(static_cast<std::uint8_t>(m.params.layers.size()));
                   for (const DynamicLayer& l : m.params.layers) {
                     w.u32(static_cast<std::uint32_t>(l.kernel.rows()));
                     w.u32(static_cast<std::uint32_t>(l.kernel.cols()));
                     for (float v : l.kernel.data()) w.f32(v);
                     for (float v : l.bias.data()) w.f32(v);
                   }
                 },
                 [&](const ErrorMessage& m) {
                   w.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(m.message.data()),
                                                         m.message.size()));
                 },
             },
             msg.body);
  return w.take();
}

WireMessage decode(std::span<const std::uint8_t> frame) {
  if (frame.size() < kFrameHeaderBytes) {
    throw ProtocolError(Kind::kTruncated, "frame: " + std::to_string(frame.size()) + " bytes is shorter than the " +
                                              std::to_string(kFrameHeaderBytes) + "-byte header");
  }
  ByteReader r(frame);
  const std::uint32_t length = r.u32();
  if (static_cast<std::size_t>(length) + 4 > frame.size()) {
    throw ProtocolError(Kind::kTruncated, "frame: header announces " + std::to_string(length + 4ull) +
                                              " bytes, have " + std::to_string(frame.size()));
  }
  if (static_cast<std::size_t>(length) + 4 != frame.size() || length < 9) {
    throw ProtocolError(Kind::kLengthMismatch, "frame: length field " + std::to_string(length) +
                                                   " does not match " + std::to_string(frame.size()) + " bytes");
  }
  const std::uint8_t type = r.u8();
  WireMessage msg;
  msg.session = r.u64();
  try {
    switch (static_cast<MessageType>(type)) {
      case MessageType::kUploadSamples: {
        const std::uint32_t count = r.u32();
        if (static_cast<std::uint64_t>(count) * 4 != r.remaining()) {
          throw ProtocolError(Kind::kMalformed, "upload samples: count " + std::to_string(count) +
                                                    " does not match payload");
        }
        if (count == 0) throw ProtocolError(Kind::kMalformed, "upload samples: empty context");
        UploadSamples m;
        m.items.resize(count);
        for (std::uint32_t& id : m.items) id = r.u32();
        msg.body = std::move(m);
        break;
      }
      case MessageType::kUploadEmbedding: {
        const std::uint32_t width = r.u32();
        if (static_cast<std::uint64_t>(width) * 4 != r.remaining() || width == 0) {
          throw ProtocolError(Kind::kMalformed, "upload embedding: width " + std::to_string(width) +
                                                    " does not match payload");
        }
        UploadEmbedding m{Tensor(1, width)};
        for (float& v : m.shared.data()) v = r.f32();
        msg.body = std::move(m);
        break;
      }
      case MessageType::kDownloadParams: {
        const std::uint8_t layers = r.u8();
        if (layers == 0) throw ProtocolError(Kind::kMalformed, "download: zero layers");
        DownloadParams m;
        m.params.provenance = Provenance::kGenerated;
        for (std::uint8_t n = 0; n < layers; ++n) {
          const std::uint64_t n_in = r.u32();
          const std::uint64_t n_out = r.u32();
          const std::uint64_t room = r.remaining() / 4;
          if (n_in == 0 || n_out == 0 || n_in > room || n_out > room || n_in * n_out + n_out > room) {
            throw ProtocolError(Kind::kMalformed, "download: layer " + std::to_string(n) + " overruns payload");
          }
          DynamicLayer l{Tensor(n_in, n_out), Tensor(1, n_out)};
          for (float& v : l.kernel.data()) v = r.f32();
          for (float& v : l.bias.data()) v = r.f32();
          m.params.layers.push_back(std::move(l));
        }
        if (r.remaining() != 0) throw ProtocolError(Kind::kMalformed, "download: trailing payload bytes");
        msg.body = std::move(m);
        break;
      }
      case MessageType::kError: {
        auto b = r.bytes(r.remaining());
        msg.body = ErrorMessage{std::string(b.begin(), b.end())};
        break;
      }
      default:
        throw ProtocolError(Kind::kUnknownType, "frame: unknown message type 0x" +
                                                    std::string(1, "0123456789ABCDEF"[type >> 4]) +
                                                    std::string(1, "0123456789ABCDEF"[type & 15]));
    }
  } catch (const TruncatedInput&) {
    throw ProtocolError(Kind::kMalformed, "frame: payload ends early");
  }
  return msg;
}

WireMessage make_upload_samples(std::uint64_t session, std::span<const std::uint32_t> context) {
  if (context.empty()) throw ProtocolError(Kind::kInvalid, "upload: empty context");
  return {session, UploadSamples{std::vector<std::uint32_t>(context.begin(), context.end())}};
}

WireMessage make_upload_embedding(std::uint64_t session, const Tensor& shared) {
  WireMessage m{session, UploadEmbedding{shared}};
  check_body(m);
  return m;
}

WireMessage make_download_params(std::uint64_t session, DynamicParams params) {
  WireMessage m{session, DownloadParams{std::move(params)}};
  check_body(m);
  return m;
}

WireMessage make_error(std::uint64_t session, std::string message) {
  return {session, ErrorMessage{std::move(message)}};
}

std::size_t payload_size(const WireMessage& msg) { return kFrameHeaderBytes + body_size(msg); }

std::optional<std::size_t> peek_frame_size(std::span<const std::uint8_t> prefix) {
  if (prefix.size() < 4) return std::nullopt;
  ByteReader r(prefix);
  return static_cast<std::size_t>(r.u32()) + 4;
}

BandwidthProfile BandwidthProfile::make(std::string name, double bytes_per_second) {
  if (!(bytes_per_second > 0.0) || !std::isfinite(bytes_per_second)) {
    throw std::invalid_argument("bandwidth profile '" + name + "': rate must be positive");
  }
  return {std::move(name), bytes_per_second};
}

BandwidthProfile BandwidthProfile::preset(const std::string& name) {
  if (name == "4g-5") return make(name, 5e6);
  if (name == "4g-15") return make(name, 15e6);
  if (name == "5g-50") return make(name, 50e6);
  if (name == "5g-100") return make(name, 100e6);
  throw std::invalid_argument("unknown bandwidth profile '" + name + "' (known: 4g-5, 4g-15, 5g-50, 5g-100)");
}

std::vector<std::string> BandwidthProfile::preset_names() { return {"4g-5", "4g-15", "5g-50", "5g-100"}; }

double transfer_delay(double size_bytes, const BandwidthProfile& profile) {
  if (!(profile.bytes_per_second > 0.0)) throw std::invalid_argument("transfer_delay: rate must be positive");
  return size_bytes / profile.bytes_per_second;
}

}  // namespace duet
