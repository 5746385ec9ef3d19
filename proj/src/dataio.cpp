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

#include "duet/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "duet/rng.hpp"

namespace duet {

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find(sep, start);
    out.push_back(line.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail_line(const std::string& source, std::size_t line_no, const std::string& what) {
  throw DataError(source + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::vector<Interaction> parse_movielens(std::istream& in, const std::string& source) {
  std::vector<Interaction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(strip_cr(line), '\t');
    if (fields.size() != 4) {
      fail_line(source, line_no, "expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    }
    Interaction x;
    std::int64_t user = 0, item = 0;
    if (!parse_number(fields[0], user) || user < 0 || user > UINT32_MAX) fail_line(source, line_no, "bad user id");
    if (!parse_number(fields[1], item) || item < 0 || item > UINT32_MAX) fail_line(source, line_no, "bad item id");
    if (!parse_number(fields[2], x.rating)) fail_line(source, line_no, "bad rating");
    if (!parse_number(fields[3], x.timestamp)) fail_line(source, line_no, "bad timestamp");
    x.user = static_cast<std::uint32_t>(user);
    x.item = static_cast<std::uint32_t>(item);
    out.push_back(x);
  }
  return out;
}

std::vector<Interaction> parse_movielens(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_movielens(in, path.string());
}

std::vector<Session> sessionize(std::span<const Interaction> interactions, std::size_t context_len,
                                std::size_t session_len) {
  if (session_len == 0) throw std::invalid_argument("sessionize: session_len must be >= 1");
  std::map<std::uint32_t, std::vector<Interaction>> by_user;
  for (const Interaction& x : interactions) by_user[x.user].push_back(x);

  std::vector<Session> out;
  for (auto& [user, events] : by_user) {
    std::sort(events.begin(), events.end(), [](const Interaction& a, const Interaction& b) {
      return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.item < b.item;
    });
    std::uint32_t id = 0;
    for (std::size_t s = 0; s + context_len + session_len <= events.size(); s += session_len) {
      Session sess;
      sess.device = user;
      sess.id = id++;
      for (std::size_t k = 0; k < context_len; ++k) sess.context.push_back(events[s + k].item);
      for (std::size_t k = 0; k < session_len; ++k) {
        sess.samples.push_back({events[s + context_len + k].item, 1.0f, static_cast<std::uint32_t>(k)});
      }
      out.push_back(std::move(sess));
    }
  }
  return out;
}

InteractedItems interacted_items(std::span<const Interaction> interactions) {
  InteractedItems out;
  for (const Interaction& x : interactions) out[x.user].push_back(x.item);
  for (auto& [user, items] : out) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
  return out;
}

namespace {

InteractedItems collect(std::span<const Session> sessions, bool with_context) {
  InteractedItems out;
  for (const Session& s : sessions) {
    auto& items = out[s.device];
    if (with_context) items.insert(items.end(), s.context.begin(), s.context.end());
    for (const LabeledSample& x : s.samples) {
      if (x.label > 0.5f) items.push_back(x.item);
    }
  }
  for (auto& [device, items] : out) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
  return out;
}

}  // namespace

InteractedItems interacted_items(std::span<const Session> sessions) { return collect(sessions, true); }

InteractedItems positive_items(std::span<const Session> sessions) { return collect(sessions, false); }

std::size_t default_negative_ratio(Split split) { return split == Split::kTrain ? 4 : 100; }

std::vector<Session> negative_sample(std::vector<Session> sessions, const InteractedItems& interacted,
                                     std::size_t num_items, std::size_t ratio, Split split,
                                     std::uint64_t seed) {
  static const std::vector<std::uint32_t> kNone;
  for (Session& s : sessions) {
    auto it = interacted.find(s.device);
    const std::vector<std::uint32_t>& seen = it == interacted.end() ? kNone : it->second;
    const std::size_t seen_in_range = static_cast<std::size_t>(
        std::lower_bound(seen.begin(), seen.end(), num_items) - seen.begin());
    if (num_items - seen_in_range < ratio) {
      throw DataError("negative_sample: device " + std::to_string(s.device) + " has only " +
                      std::to_string(num_items - seen_in_range) + " non-interacted items, ratio needs " +
                      std::to_string(ratio));
    }
    Rng rng(Rng::derive(Rng::derive(seed, static_cast<std::uint64_t>(split)),
                        (static_cast<std::uint64_t>(s.device) << 32) | s.id));
    std::vector<LabeledSample> out;
    for (const LabeledSample& pos : s.samples) {
      if (pos.label < 0.5f) continue;
      out.push_back(pos);
      std::vector<std::uint32_t> chosen;
      while (chosen.size() < ratio) {
        const auto item = static_cast<std::uint32_t>(rng.below(num_items));
        if (std::binary_search(seen.begin(), seen.end(), item)) continue;
        if (std::find(chosen.begin(), chosen.end(), item) != chosen.end()) continue;
        chosen.push_back(item);
        out.push_back({item, 0.0f, pos.position});
      }
    }
    s.samples = std::move(out);
  }
  return sessions;
}

Dataset movielens_dataset(std::span<const Interaction> interactions, std::size_t context_len,
                          std::size_t session_len, std::size_t train_ratio, std::size_t test_ratio,
                          std::uint64_t seed) {
  Dataset d;
  for (const Interaction& x : interactions) d.num_items = std::max<std::size_t>(d.num_items, x.item + 1);
  std::vector<Session> all = sessionize(interactions, context_len, session_len);
  std::vector<Session> train, test;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const bool last_of_user = i + 1 == all.size() || all[i + 1].device != all[i].device;
    (last_of_user ? test : train).push_back(std::move(all[i]));
  }
  const InteractedItems seen = interacted_items(interactions);
  d.train = negative_sample(std::move(train), seen, d.num_items, train_ratio, Split::kTrain, seed);
  d.test = negative_sample(std::move(test), seen, d.num_items, test_ratio, Split::kTest, seed);
  return d;
}

void SynthConfig::validate() const {
  if (devices == 0 || train_sessions + test_sessions == 0 || items == 0 || clusters == 0 ||
      context_len == 0 || session_len == 0) {
    throw std::invalid_argument("synth: all counts must be >= 1");
  }
  if (clusters > items) throw std::invalid_argument("synth: more clusters than items");
  if (!(drift >= 0.0 && drift <= 1.0)) throw std::invalid_argument("synth: drift must lie in [0, 1]");
}

std::size_t cluster_of(std::size_t item, std::size_t items, std::size_t clusters) {
  return item * clusters / items;
}

Dataset synth_shift(const SynthConfig& cfg) {
  cfg.validate();
  // Cluster c holds items [begin(c), begin(c + 1)).
  auto begin = [&](std::size_t c) { return (c * cfg.items + cfg.clusters - 1) / cfg.clusters; };
  const std::size_t total = cfg.train_sessions + cfg.test_sessions;

  std::vector<Session> train, test;
  for (std::size_t dev = 0; dev < cfg.devices; ++dev) {
    Rng rng(Rng::derive(cfg.seed, dev));
    std::vector<double> mix(cfg.clusters, 0.0);
    std::size_t current = rng.below(cfg.clusters);  // dominant cluster of the mixture
    mix[current] = 1.0;

    auto from_cluster = [&](std::size_t c) {
      const std::size_t lo = begin(c), hi = begin(c + 1);
      return static_cast<std::uint32_t>(lo + rng.below(hi - lo));
    };
    auto draw = [&] {
      double u = rng.uniform();
      std::size_t c = 0;
      while (c + 1 < cfg.clusters && u >= mix[c]) u -= mix[c++];
      return from_cluster(c);
    };

    for (std::size_t s = 0; s < total; ++s) {
      if (s > 0 && cfg.clusters > 1) {
        const std::size_t top = static_cast<std::size_t>(std::max_element(mix.begin(), mix.end()) - mix.begin());
        std::size_t target = rng.below(cfg.clusters - 1);
        if (target >= top) ++target;
        for (double& w : mix) w *= 1.0 - cfg.drift;
        mix[target] += cfg.drift;
        // Ties go to the newer cluster.
        const double best = *std::max_element(mix.begin(), mix.end());
        current = mix[target] >= best ? target
                                      : static_cast<std::size_t>(std::max_element(mix.begin(), mix.end()) - mix.begin());
      }
      Session sess;
      sess.device = static_cast<std::uint32_t>(dev);
      sess.id = static_cast<std::uint32_t>(s);
      for (std::size_t k = 0; k < cfg.context_len; ++k) sess.context.push_back(draw());
      for (std::size_t k = 0; k < cfg.session_len; ++k) {
        sess.samples.push_back({from_cluster(current), 1.0f, static_cast<std::uint32_t>(k)});
      }
      (s < cfg.train_sessions ? train : test).push_back(std::move(sess));
    }
  }

  std::vector<Session> all = train;
  all.insert(all.end(), test.begin(), test.end());
  const InteractedItems seen = positive_items(std::span<const Session>(all));

  Dataset d;
  d.num_items = cfg.items;
  d.train = negative_sample(std::move(train), seen, cfg.items, cfg.train_ratio, Split::kTrain, cfg.seed);
  d.test = negative_sample(std::move(test), seen, cfg.items, cfg.test_ratio, Split::kTest, cfg.seed);
  return d;
}

void write_dataset(std::ostream& out, const Dataset& d) {
  out << "# items=" << d.num_items << "\n";
  out << "device_id,session_id,t,item_id,label\n";
  auto block = [&](const char* name, const std::vector<Session>& sessions) {
    out << "# split=" << name << "\n";
    for (const Session& s : sessions) {
      for (std::uint32_t item : s.context) out << s.device << ',' << s.id << ",-1," << item << ",-1\n";
      for (const LabeledSample& x : s.samples) {
        out << s.device << ',' << s.id << ',' << x.position << ',' << x.item << ','
            << (x.label > 0.5f ? 1 : 0) << "\n";
      }
    }
  };
  block("train", d.train);
  block("test", d.test);
}

Dataset read_dataset(std::istream& in, const std::string& source) {
  Dataset d;
  bool have_items = false, have_header = false;
  std::vector<Session>* target = nullptr;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view v = strip_cr(line);
    if (v.empty()) continue;
    if (v.front() == '#') {
      if (v.starts_with("# items=")) {
        if (!parse_number(v.substr(8), d.num_items)) fail_line(source, line_no, "bad item count");
        have_items = true;
      } else if (v == "# split=train") {
        target = &d.train;
      } else if (v == "# split=test") {
        target = &d.test;
      }
      continue;
    }
    if (!have_header) {
      if (v != "device_id,session_id,t,item_id,label") fail_line(source, line_no, "missing CSV header");
      have_header = true;
      continue;
    }
    if (!target) fail_line(source, line_no, "row before any '# split=' directive");
    const auto f = split_fields(v, ',');
    if (f.size() != 5) fail_line(source, line_no, "expected 5 comma-separated fields");
    std::uint32_t device = 0, id = 0, item = 0;
    std::int64_t t = 0, label = 0;
    if (!parse_number(f[0], device) || !parse_number(f[1], id) || !parse_number(f[2], t) ||
        !parse_number(f[3], item) || !parse_number(f[4], label)) {
      fail_line(source, line_no, "unparsable field");
    }
    if (have_items && item >= d.num_items) fail_line(source, line_no, "item id out of range");
    if (target->empty() || target->back().device != device || target->back().id != id) {
      target->push_back(Session{device, id, {}, {}});
    }
    Session& s = target->back();
    if (t < 0) {
      if (label != -1) fail_line(source, line_no, "context rows carry label -1");
      if (!s.samples.empty()) fail_line(source, line_no, "context row after labeled rows");
      s.context.push_back(item);
    } else {
      if (label != 0 && label != 1) fail_line(source, line_no, "label must be 0 or 1");
      s.samples.push_back({item, static_cast<float>(label), static_cast<std::uint32_t>(t)});
    }
  }
  if (!have_items) throw DataError(source + ": missing '# items=' line");
  return d;
}

void write_dataset(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_dataset(out, d);
  if (!out) throw DataError("write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_dataset(in, path.string());
}

}  // namespace duet
