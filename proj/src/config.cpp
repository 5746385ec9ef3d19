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

#include "duet/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "duet/protocol.hpp"

namespace duet {

namespace {

struct Key {
  std::string name;
  // Parses and range-checks; throws std::invalid_argument with the reason.
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

std::string format_float(float v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

float parse_float(const std::string& s) {
  float v = 0.0f;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return v;
}

template <typename T>
T parse_uint(const std::string& s) {
  T v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

Key uint_key(std::string name, std::size_t Config::*field, std::size_t lo) {
  return {name,
          [field, lo](Config& c, const std::string& s) {
            const auto v = parse_uint<std::size_t>(s);
            if (v < lo) throw std::invalid_argument("must be >= " + std::to_string(lo));
            c.*field = v;
          },
          [field](const Config& c) { return std::to_string(c.*field); }};
}

// Range (lo, hi] or [lo, hi] depending on lo_open.
Key float_key(std::string name, float Config::*field, float lo, bool lo_open, float hi, std::string range) {
  return {name,
          [=](Config& c, const std::string& s) {
            const float v = parse_float(s);
            if ((lo_open ? !(v > lo) : !(v >= lo)) || !(v <= hi)) {
              throw std::invalid_argument("value " + s + " outside " + range);
            }
            c.*field = v;
          },
          [field](const Config& c) { return format_float(c.*field); }};
}

Key string_key(std::string name, std::string Config::*field,
               std::function<void(const std::string&)> check = nullptr) {
  return {name,
          [field, check](Config& c, const std::string& s) {
            if (check) check(s);
            c.*field = s;
          },
          [field](const Config& c) { return c.*field; }};
}

constexpr float kInf = std::numeric_limits<float>::infinity();

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"seed", [](Config& c, const std::string& s) { c.seed = parse_uint<std::uint64_t>(s); },
       [](const Config& c) { return std::to_string(c.seed); }},
      float_key("gamma", &Config::gamma, 0.0f, true, 1.0f, "(0,1]"),
      float_key("tau", &Config::tau, 0.0f, true, kInf, "(0,inf)"),
      uint_key("m", &Config::m, 1),
      float_key("lr", &Config::lr, 0.0f, true, kInf, "(0,inf)"),
      uint_key("epochs", &Config::epochs, 1),
      uint_key("batch", &Config::batch, 1),
      uint_key("context_len", &Config::context_len, 1),
      uint_key("session_len", &Config::session_len, 1),
      uint_key("embed_dim", &Config::embed_dim, 1),
      uint_key("hidden_dim", &Config::hidden_dim, 2),
      string_key("dataset.path", &Config::dataset_path),
      string_key("bandwidth.profile", &Config::bandwidth_profile,
                 [](const std::string& s) { BandwidthProfile::preset(s); }),
      string_key("optimizer", &Config::optimizer,
                 [](const std::string& s) {
                   if (s != "adam" && s != "sgd") throw std::invalid_argument("expected adam or sgd");
                 }),
      uint_key("train_ratio", &Config::train_ratio, 1),
      uint_key("test_ratio", &Config::test_ratio, 1),
      uint_key("finetune.steps", &Config::finetune_steps, 0),
      float_key("finetune.lr", &Config::finetune_lr, 0.0f, false, kInf, "[0,inf)"),
      uint_key("synth.devices", &Config::synth_devices, 1),
      uint_key("synth.train_sessions", &Config::synth_train_sessions, 1),
      uint_key("synth.test_sessions", &Config::synth_test_sessions, 1),
      uint_key("synth.items", &Config::synth_items, 1),
      uint_key("synth.clusters", &Config::synth_clusters, 1),
      float_key("synth.drift", &Config::synth_drift, 0.0f, false, 1.0f, "[0,1]"),
      string_key("eval.modes", &Config::eval_modes,
                 [](const std::string& s) {
                   Config probe;
                   probe.eval_modes = s;
                   probe.modes();
                 }),
      {"report.timing",
       [](Config& c, const std::string& s) {
         if (s != "on" && s != "off") throw std::invalid_argument("expected on or off");
         c.report_timing = s == "on";
       },
       [](const Config& c) { return std::string(c.report_timing ? "on" : "off"); }},
      float_key("rtt_ms", &Config::rtt_ms, 0.0f, false, kInf, "[0,inf)"),
      uint_key("ppg.shared_dim", &Config::ppg_shared_dim, 1),
      uint_key("ppg.layer_dim", &Config::ppg_layer_dim, 1),
      uint_key("ppg.hidden_dim", &Config::ppg_hidden_dim, 1),
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void assign(Config& cfg, const std::string& key, const std::string& value, const std::string& where) {
  for (const Key& k : keys()) {
    if (k.name != key) continue;
    try {
      k.set(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ": " + key + ": " + e.what());
    }
    return;
  }
  throw ConfigError(where + ": unknown key '" + key + "'");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Key& k : keys()) out.push_back(k.name);
  return out;
}

std::vector<std::pair<std::string, std::string>> Config::echo() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Key& k : keys()) out.emplace_back(k.name, k.get(*this));
  return out;
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [key, value] : echo()) out += key + " = " + value + "\n";
  return out;
}

std::vector<std::string> Config::modes() const {
  static const std::vector<std::string> known = {"duet", "duet-embedding", "static", "finetune"};
  std::vector<std::string> out;
  std::stringstream ss(eval_modes);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (std::find(known.begin(), known.end(), item) == known.end()) {
      throw std::invalid_argument("unknown mode '" + item + "' (known: duet, duet-embedding, static, finetune)");
    }
    out.push_back(item);
  }
  if (out.empty()) throw std::invalid_argument("no modes listed");
  return out;
}

TrainConfig Config::train_config() const {
  TrainConfig t;
  t.gamma = gamma;
  t.lr = lr;
  t.epochs = epochs;
  t.batch = batch;
  t.seed = seed;
  t.m = m;
  t.tau = tau;
  t.optimizer = optimizer == "sgd" ? OptimizerKind::kSgd : OptimizerKind::kAdam;
  t.model.embed_dim = embed_dim;
  t.model.hidden_dim = hidden_dim;
  t.generator.input_dim = embed_dim;
  t.generator.shared_dim = ppg_shared_dim;
  t.generator.layer_dim = ppg_layer_dim;
  t.generator.hidden_dim = ppg_hidden_dim;
  return t;
}

SynthConfig Config::synth_config() const {
  SynthConfig s;
  s.devices = synth_devices;
  s.train_sessions = synth_train_sessions;
  s.test_sessions = synth_test_sessions;
  s.items = synth_items;
  s.clusters = synth_clusters;
  s.drift = synth_drift;
  s.context_len = context_len;
  s.session_len = session_len;
  s.train_ratio = train_ratio;
  s.test_ratio = test_ratio;
  s.seed = seed;
  return s;
}

Config parse_config(const std::string& text, const std::string& source) {
  Config cfg;
  std::stringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    assign(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
  }
  return cfg;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void apply_override(Config& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "': expected key=value");
  assign(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), "override");
}

}  // namespace duet
