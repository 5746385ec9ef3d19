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

// Interaction logs, sessions and the synthetic preference-drift benchmark.
//
// Dataset text format (one file holds both splits):
//
//   # items=<N>
//   device_id,session_id,t,item_id,label
//   # split=train
//   3,0,-1,17,-1        context row (t = -1, label = -1), in upload order
//   3,0,0,42,1          labeled row, t = position within the session
//   ...
//   # split=test
//   ...
//
// Lines starting with '#' other than the two directives are ignored.

#ifndef DUET_DATAIO_HPP_
#define DUET_DATAIO_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace duet {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  float rating = 0.0f;
  std::int64_t timestamp = 0;
  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct LabeledSample {
  std::uint32_t item = 0;
  float label = 0.0f;          // 1 positive, 0 negative
  std::uint32_t position = 0;  // 0-based; negatives share their positive's
  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct Session {
  std::uint32_t device = 0;
  std::uint32_t id = 0;
  std::vector<std::uint32_t> context;
  std::vector<LabeledSample> samples;
  friend bool operator==(const Session&, const Session&) = default;
};

enum class Split : std::uint8_t { kTrain, kTest };

struct Dataset {
  std::size_t num_items = 0;
  std::vector<Session> train;
  std::vector<Session> test;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Tab-separated user, item, rating, timestamp. Fails on the first malformed
// line, naming it.
std::vector<Interaction> parse_movielens(std::istream& in, const std::string& source = "<stream>");
std::vector<Interaction> parse_movielens(const std::filesystem::path& path);

// Per user, events sorted by (timestamp, item) are cut into windows of
// context_len context items followed by session_len positives; windows
// advance by session_len. Users come out in ascending id order.
std::vector<Session> sessionize(std::span<const Interaction> interactions, std::size_t context_len,
                                std::size_t session_len);

// Sorted item ids each user interacted with.
using InteractedItems = std::map<std::uint32_t, std::vector<std::uint32_t>>;
InteractedItems interacted_items(std::span<const Interaction> interactions);
InteractedItems interacted_items(std::span<const Session> sessions);  // context and positives
InteractedItems positive_items(std::span<const Session> sessions);

std::size_t default_negative_ratio(Split split);  // 4 train, 100 test

// Appends `ratio` distinct negatives after every positive, drawn uniformly
// from [0, num_items) minus the device's interacted items. Each session uses
// its own stream derived from (seed, split, device, id).
std::vector<Session> negative_sample(std::vector<Session> sessions, const InteractedItems& interacted,
                                     std::size_t num_items, std::size_t ratio, Split split,
                                     std::uint64_t seed);

// sessionize + last session per user held out for test + negative sampling.
Dataset movielens_dataset(std::span<const Interaction> interactions, std::size_t context_len,
                          std::size_t session_len, std::size_t train_ratio, std::size_t test_ratio,
                          std::uint64_t seed);

struct SynthConfig {
  std::size_t devices = 8;
  std::size_t train_sessions = 40;  // per device
  std::size_t test_sessions = 10;   // per device, the chronologically last ones
  std::size_t items = 1000;
  std::size_t clusters = 4;
  double drift = 0.5;
  std::size_t context_len = 10;
  std::size_t session_len = 5;
  std::size_t train_ratio = 4;
  std::size_t test_ratio = 100;
  std::uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument
};

// Items are split into `clusters` contiguous equal-width blocks.
std::size_t cluster_of(std::size_t item, std::size_t items, std::size_t clusters);

// Each device starts on one cluster; at every session boundary its mixture
// moves a `drift` fraction toward a different, randomly chosen cluster.
// Context items are drawn from the current mixture; positives are drawn
// from its dominant cluster, so only the context tells which cluster that is.
// Negatives avoid every item the device ever labeled positive; unlabeled
// context items stay eligible.
Dataset synth_shift(const SynthConfig& cfg);

void write_dataset(std::ostream& out, const Dataset& d);
Dataset read_dataset(std::istream& in, const std::string& source = "<stream>");
void write_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace duet

#endif  // DUET_DATAIO_HPP_
