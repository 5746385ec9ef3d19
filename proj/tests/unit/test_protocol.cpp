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

#include <bit>
#include <cstdint>
#include <numeric>
#include <vector>

#include "catch_amalgamated.hpp"
#include "duet/protocol.hpp"
#include "duet/rng.hpp"

using namespace duet;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using Kind = ProtocolError::Kind;

namespace {

float random_float(Rng& rng) { return std::bit_cast<float>(static_cast<std::uint32_t>(rng.next() & 0xbf7fffffu)); }

Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t(rows, cols);
  for (float& v : t.data()) v = random_float(rng);
  return t;
}

DynamicParams random_params(Rng& rng, std::span<const std::uint32_t> widths) {
  DynamicParams p;
  for (std::size_t n = 0; n + 1 < widths.size(); ++n)
    p.layers.push_back({random_tensor(rng, widths[n], widths[n + 1]), random_tensor(rng, 1, widths[n + 1])});
  return p;
}

WireMessage random_message(Rng& rng) {
  const std::uint64_t session = rng.next();
  switch (rng.below(4)) {
    case 0: {
      std::vector<std::uint32_t> items(1 + rng.below(40));
      for (auto& x : items) x = static_cast<std::uint32_t>(rng.next());
      return make_upload_samples(session, items);
    }
    case 1:
      return make_upload_embedding(session, random_tensor(rng, 1, 1 + rng.below(48)));
    case 2: {
      std::vector<std::uint32_t> widths(2 + rng.below(3));
      for (auto& w : widths) w = static_cast<std::uint32_t>(1 + rng.below(9));
      return make_download_params(session, random_params(rng, widths));
    }
    default: {
      std::string text(rng.below(30), ' ');
      for (char& c : text) c = static_cast<char>('a' + rng.below(26));
      return make_error(session, text);
    }
  }
}

Kind kind_of(std::span<const std::uint8_t> frame) {
  try {
    decode(frame);
  } catch (const ProtocolError& e) {
    return e.kind();
  }
  FAIL("decode succeeded");
  return Kind::kInvalid;
}

}  // namespace

TEST_CASE("upload of a ten-item context is a 57-byte frame") {
  std::vector<std::uint32_t> items(10);
  std::iota(items.begin(), items.end(), 100u);
  const WireMessage m = make_upload_samples(7, items);
  const std::vector<std::uint8_t> bytes = encode(m);
  CHECK(bytes.size() == 57);
  CHECK(payload_size(m) == 57);
  // length = 53, type, session id, count, first id.
  CHECK(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 21) ==
        std::vector<std::uint8_t>{53, 0, 0, 0, 0x01, 7, 0, 0, 0, 0, 0, 0, 0, 10, 0, 0, 0, 100, 0, 0, 0});
  CHECK(m.type() == MessageType::kUploadSamples);
}

TEST_CASE("an empty context cannot be encoded") {
  const WireMessage m{1, UploadSamples{}};
  try {
    encode(m);
    FAIL("encoded");
  } catch (const ProtocolError& e) {
    CHECK(e.kind() == Kind::kInvalid);
  }
}

TEST_CASE("a 32-wide embedding carries a 132-byte payload") {
  const WireMessage m = make_upload_embedding(1, Tensor(1, 32));
  CHECK(payload_size(m) - kFrameHeaderBytes == 132);
  const WireMessage back = decode(encode(m));
  CHECK(bit_equal(back, m));
  CHECK(std::get<UploadEmbedding>(back.body).shared == Tensor(1, 32));
  CHECK_THROWS_AS(encode(WireMessage{1, UploadEmbedding{Tensor(2, 16)}}), ProtocolError);
}

TEST_CASE("a 32-16-1 head downloads in 2197 payload bytes") {
  Rng rng(1);
  const std::uint32_t widths[] = {32, 16, 1};
  const WireMessage m = make_download_params(3, random_params(rng, widths));
  // 1 + (8 + 32*16*4 + 16*4) + (8 + 16*4 + 4)
  CHECK(payload_size(m) - kFrameHeaderBytes == 2197);
  const WireMessage back = decode(encode(m));
  CHECK(bit_equal(back, m));
  CHECK(std::get<DownloadParams>(back.body).params.provenance == Provenance::kGenerated);
}

TEST_CASE("a head near 8 KB is representable") {
  Rng rng(2);
  const std::uint32_t widths[] = {44, 44, 1};
  const WireMessage m = make_download_params(3, random_params(rng, widths));
  CHECK(payload_size(m) > 8000);
  CHECK(payload_size(m) < 8200);
  CHECK(bit_equal(decode(encode(m)), m));
}

TEST_CASE("an error frame without text is just the header") {
  const WireMessage m = make_error(9, "");
  CHECK(encode(m).size() == 13);
  CHECK(payload_size(m) == kFrameHeaderBytes);
  CHECK(bit_equal(decode(encode(m)), m));
}

TEST_CASE("each extra float costs four bytes") {
  for (std::size_t w = 1; w < 40; ++w)
    CHECK(payload_size(make_upload_embedding(0, Tensor(1, 2 * w))) ==
          payload_size(make_upload_embedding(0, Tensor(1, w))) + 4 * w);
}

TEST_CASE("encode then decode is the identity and sizes are exact") {
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const WireMessage m = random_message(rng);
    const std::vector<std::uint8_t> bytes = encode(m);
    REQUIRE(bytes.size() == payload_size(m));
    REQUIRE(peek_frame_size(bytes) == bytes.size());
    REQUIRE(bit_equal(decode(bytes), m));
  }
}

TEST_CASE("no truncated prefix decodes") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<std::uint8_t> bytes = encode(random_message(rng));
    for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
      const Kind k = kind_of(std::span<const std::uint8_t>(bytes.data(), cut));
      REQUIRE((k == Kind::kTruncated || k == Kind::kLengthMismatch));
    }
  }
  CHECK_FALSE(peek_frame_size(std::vector<std::uint8_t>{1, 2, 3}).has_value());
}

TEST_CASE("malformed frames fail with a specific kind") {
  std::vector<std::uint32_t> items{1, 2, 3};
  const std::vector<std::uint8_t> good = encode(make_upload_samples(1, items));

  std::vector<std::uint8_t> unknown = good;
  unknown[4] = 0x33;
  CHECK(kind_of(unknown) == Kind::kUnknownType);

  std::vector<std::uint8_t> longer = good;
  longer.push_back(0);
  CHECK(kind_of(longer) == Kind::kLengthMismatch);

  std::vector<std::uint8_t> count = good;
  count[13] = 4;  // claims 4 ids, carries 3
  CHECK(kind_of(count) == Kind::kMalformed);

  std::vector<std::uint8_t> empty = good;
  empty[13] = 0;
  empty.resize(17);
  empty[0] = 13;
  CHECK(kind_of(empty) == Kind::kMalformed);
}

TEST_CASE("delays use decimal units") {
  const BandwidthProfile b5 = BandwidthProfile::preset("4g-5");
  CHECK_THAT(transfer_delay(7320, b5) * 1e3, WithinAbs(1.464, 1e-9));
  CHECK_THAT(transfer_delay(8060, b5) * 1e3, WithinAbs(1.612, 1e-9));
  CHECK_THAT(transfer_delay(5.31e6, b5), WithinAbs(1.062, 1e-9));
  CHECK_THAT(transfer_delay(2 * 7320, b5), WithinRel(2 * transfer_delay(7320, b5), 1e-12));
  const BandwidthProfile twice = BandwidthProfile::make("x", 10e6);
  CHECK_THAT(transfer_delay(7320, twice), WithinRel(transfer_delay(7320, b5) / 2, 1e-12));
}

TEST_CASE("bandwidth presets and rejects") {
  CHECK(BandwidthProfile::preset_names() == std::vector<std::string>{"4g-5", "4g-15", "5g-50", "5g-100"});
  CHECK(BandwidthProfile::preset("4g-15").bytes_per_second == 15e6);
  CHECK(BandwidthProfile::preset("5g-50").bytes_per_second == 50e6);
  CHECK(BandwidthProfile::preset("5g-100").bytes_per_second == 100e6);
  CHECK_THROWS_AS(BandwidthProfile::preset("3g"), std::invalid_argument);
  CHECK_THROWS_AS(BandwidthProfile::make("z", 0.0), std::invalid_argument);
  CHECK_THROWS_AS(BandwidthProfile::make("n", -5.0), std::invalid_argument);
}
