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

// Line-oriented `key = value` configuration. '#' starts a comment, blank
// lines are ignored, unknown keys are errors. Every key has a default, so an
// empty file is a complete configuration.

#ifndef DUET_CONFIG_HPP_
#define DUET_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "duet/dataio.hpp"
#include "duet/trainer.hpp"

namespace duet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Config {
  std::uint64_t seed = 1;
  float gamma = 0.9f;
  float tau = 1.0f;
  std::size_t m = 5;
  float lr = 0.5f;
  std::size_t epochs = 30;
  std::size_t batch = 8;
  std::size_t context_len = 10;
  std::size_t session_len = 5;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;
  std::string dataset_path;
  std::string bandwidth_profile = "4g-5";

  std::string optimizer = "sgd";  // sgd | adam
  std::size_t train_ratio = 4;
  std::size_t test_ratio = 100;
  std::size_t finetune_steps = 50;
  float finetune_lr = 0.01f;
  std::size_t synth_devices = 8;
  std::size_t synth_train_sessions = 40;
  std::size_t synth_test_sessions = 10;
  std::size_t synth_items = 300;
  std::size_t synth_clusters = 4;
  float synth_drift = 0.5f;
  std::string eval_modes = "duet,duet-embedding,static,finetune";
  bool report_timing = false;
  float rtt_ms = 0.0f;
  std::size_t ppg_shared_dim = 32;
  std::size_t ppg_layer_dim = 16;
  std::size_t ppg_hidden_dim = 8;

  // Effective values, in documented key order, as `key = value` text.
  std::string serialize() const;
  std::vector<std::pair<std::string, std::string>> echo() const;

  TrainConfig train_config() const;
  SynthConfig synth_config() const;
  std::vector<std::string> modes() const;
};

// Throws ConfigError naming the line for unknown keys, unparsable values and
// range violations.
Config parse_config(const std::string& text, const std::string& source = "<config>");
Config load_config(const std::filesystem::path& path);

// Applies `key=value` overrides on top of a loaded config.
void apply_override(Config& cfg, const std::string& assignment);

// Documented keys in serialization order.
std::vector<std::string> config_keys();

}  // namespace duet

#endif  // DUET_CONFIG_HPP_
