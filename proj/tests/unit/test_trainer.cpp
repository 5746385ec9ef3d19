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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <vector>

#include "catch_amalgamated.hpp"
#include "duet/trainer.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "reference_model.hpp"

using namespace duet;
using Catch::Matchers::WithinAbs;

namespace {

DuetModel fresh_model(std::uint64_t seed, TrainConfig cfg = oracle::gradcheck_config()) {
  Rng rng(seed);
  return DuetModel::init(cfg, rng);
}

std::vector<Tensor> all_values(DuetModel& m) {
  std::vector<Tensor> out;
  for_each_parameter(m, [&](const std::string&, Parameter& p) { out.push_back(p.value); });
  return out;
}

TrainConfig tiny_train_config(std::size_t num_items) {
  TrainConfig cfg = oracle::gradcheck_config();
  cfg.model.num_items = num_items;
  cfg.epochs = 2;
  cfg.batch = 4;
  cfg.lr = 0.05f;
  cfg.optimizer = OptimizerKind::kAdam;
  return cfg;
}

}  // namespace

TEST_CASE("position weights decay with t, share t across negatives and sum to one") {
  std::vector<LabeledSample> samples;
  for (std::uint32_t t = 0; t < 4; ++t) {
    samples.push_back({1, 1.0f, t});
    samples.push_back({2, 0.0f, t});
  }
  const std::vector<float> w = position_weights(samples, 0.7f);
  CHECK_THAT(std::accumulate(w.begin(), w.end(), 0.0), WithinAbs(1.0, 1e-6));
  for (std::size_t i = 0; i + 2 < w.size(); i += 2) {
    CHECK(w[i] == w[i + 1]);
    CHECK(w[i + 2] < w[i]);
  }
  const std::vector<float> flat = position_weights(samples, 1.0f);
  for (float v : flat) CHECK_THAT(v, WithinAbs(1.0 / 8.0, 1e-7));
}

TEST_CASE("a perfect-margin head has near-zero loss") {
  DuetModel m = fresh_model(1);
  for (Dense& d : m.global_head) d.weight.value.fill(0.0f);
  m.global_head.back().bias.value.fill(40.0f);
  Session s;
  s.context = {1, 2};
  for (std::uint32_t t = 0; t < 5; ++t) s.samples.push_back({t, 1.0f, t});
  CHECK(umn_loss(m, std::span<const Session>(&s, 1)) < 1e-6f);
}

TEST_CASE("an untrained model sits near chance on a balanced task") {
  TrainConfig cfg = oracle::gradcheck_config();
  cfg.model.num_items = 400;
  DuetModel m = fresh_model(2, cfg);
  Rng rng(20);
  std::vector<Session> batch;
  for (std::uint32_t s = 0; s < 100; ++s) {
    Session x;
    for (int c = 0; c < 5; ++c) x.context.push_back(static_cast<std::uint32_t>(rng.below(400)));
    for (std::uint32_t t = 0; t < 5; ++t) {
      x.samples.push_back({static_cast<std::uint32_t>(rng.below(400)), 1.0f, t});
      x.samples.push_back({static_cast<std::uint32_t>(rng.below(400)), 0.0f, t});
    }
    batch.push_back(std::move(x));
  }
  CHECK_THAT(umn_loss(m, batch), WithinAbs(std::log(2.0), 0.1));
}

TEST_CASE("losses match the per-sample double-precision reference") {
  DuetModel m = fresh_model(3);
  Rng rng(30);
  const std::vector<Session> batch = oracle::gradcheck_batch(rng, 24);
  double ref = 0.0, count = 0.0;
  for (const Session& s : batch) {
    ref += oracle::umn_loss(m, s) * static_cast<double>(s.samples.size());
    count += static_cast<double>(s.samples.size());
  }
  CHECK_THAT(umn_loss(m, batch), WithinAbs(ref / count, 1e-6));
  const oracle::RefGenerator g0 = oracle::to_ref(m.generators[0]);
  CHECK_THAT(ppg_loss(m, m.generators[0], batch[0], 0.9f), WithinAbs(oracle::ppg_loss(m, g0, batch[0], 0.9), 1e-6));
}

TEST_CASE("with gamma one the generated loss is the plain mean") {
  DuetModel m = fresh_model(4);
  Rng rng(40);
  const Session s = oracle::gradcheck_batch(rng, 24)[0];
  // Install the generated head as the global head and score with the
  // unweighted loss.
  const DynamicParams p = generate_all(s.context, m.backbone.embedding.value, m.generators[1], m.spec);
  for (std::size_t n = 0; n < p.layers.size(); ++n) {
    m.global_head[n].weight.value = p.layers[n].kernel;
    m.global_head[n].bias.value = p.layers[n].bias;
  }
  CHECK_THAT(ppg_loss(m, m.generators[1], s, 1.0f), WithinAbs(umn_loss(m, std::span<const Session>(&s, 1)), 1e-6));
}

TEST_CASE("gamma one half weights two samples as (a + b/2) / 1.5") {
  DuetModel m = fresh_model(5);
  Session s;
  s.context = {3, 4, 5};
  s.samples = {{7, 1.0f, 0}, {9, 0.0f, 1}};
  auto single = [&](const LabeledSample& x) {
    Session one = s;
    one.samples = {x};
    one.samples[0].position = 0;
    return static_cast<double>(ppg_loss(m, m.generators[0], one, 0.5f));
  };
  const double a = single(s.samples[0]), b = single(s.samples[1]);
  CHECK_THAT(ppg_loss(m, m.generators[0], s, 0.5f), WithinAbs((a + 0.5 * b) / 1.5, 1e-6));
}

TEST_CASE("joint gradients match central differences of the reference") {
  DuetModel m = fresh_model(6);
  Rng rng(60);
  const std::vector<Session> batch = oracle::gradcheck_batch(rng, 24);
  CHECK(oracle::parameter_count(m) <= 5000);
  const auto probes = oracle::probe_joint_gradients(m, batch, 0.9f, 60, rng);
  for (const auto& p : probes) {
    INFO(p.tensor << "[" << p.index << "] analytic " << p.probe.analytic << " numeric " << p.probe.numeric);
    CHECK(oracle::grad_error(p.probe) <= oracle::kGradRelTol);
  }
}

TEST_CASE("training lowers the loss on a two-cluster task") {
  SynthConfig sc = oracle::tiny_synth(7);
  sc.clusters = 2;
  sc.devices = 4;
  sc.train_sessions = 10;
  const Dataset d = synth_shift(sc);
  TrainConfig cfg = tiny_train_config(d.num_items);
  cfg.epochs = 1000;
  cfg.max_steps = 200;
  const TrainResult r = train_joint(d.train, d.num_items, cfg);
  REQUIRE(r.step_losses.size() == 200);
  const double first = std::accumulate(r.step_losses.begin(), r.step_losses.begin() + 20, 0.0) / 20.0;
  const double last = std::accumulate(r.step_losses.end() - 20, r.step_losses.end(), 0.0) / 20.0;
  CHECK(last < first);
  CHECK(r.checkpoint.step == 200);
}

TEST_CASE("training twice with one seed gives identical checkpoints") {
  const Dataset d = synth_shift(oracle::tiny_synth(8));
  const TrainConfig cfg = tiny_train_config(d.num_items);
  const TrainResult a = train_joint(d.train, d.num_items, cfg);
  const TrainResult b = train_joint(d.train, d.num_items, cfg);
  CHECK(encode_tensor_table(to_tensor_table(a.checkpoint)) == encode_tensor_table(to_tensor_table(b.checkpoint)));
  TrainConfig other = cfg;
  other.seed = 99;
  const TrainResult c = train_joint(d.train, d.num_items, other);
  CHECK(encode_tensor_table(to_tensor_table(a.checkpoint)) != encode_tensor_table(to_tensor_table(c.checkpoint)));
}

TEST_CASE("a zero learning rate leaves every parameter unchanged") {
  const Dataset d = synth_shift(oracle::tiny_synth(9));
  for (OptimizerKind kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    TrainConfig cfg = tiny_train_config(d.num_items);
    cfg.lr = 0.0f;
    cfg.optimizer = kind;
    Rng rng(Rng::derive(cfg.seed, 0));
    DuetModel init = DuetModel::init(cfg, rng);
    const std::vector<Tensor> before = all_values(init);
    TrainResult r = train_joint(init, d.train, cfg);
    const std::vector<Tensor> after = all_values(r.checkpoint.model);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(bit_equal(before[i], after[i]));
  }
}

TEST_CASE("backbone-and-head-only training leaves the generators alone") {
  const Dataset d = synth_shift(oracle::tiny_synth(10));
  TrainConfig cfg = tiny_train_config(d.num_items);
  cfg.mode = TrainMode::kUmnOnly;
  Rng rng(Rng::derive(cfg.seed, 0));
  DuetModel init = DuetModel::init(cfg, rng);
  std::vector<Tensor> gens;
  for (auto& g : init.generators) for_each_tensor(g, [&](const std::string&, Parameter& p) { gens.push_back(p.value); });
  TrainResult r = train_joint(init, d.train, cfg);
  std::size_t k = 0;
  for (auto& g : r.checkpoint.model.generators)
    for_each_tensor(g, [&](const std::string&, Parameter& p) { CHECK(bit_equal(p.value, gens[k++])); });
  CHECK_FALSE(bit_equal(r.checkpoint.model.backbone.embedding.value, init.backbone.embedding.value));
}

TEST_CASE("invalid configurations are rejected by name") {
  const Dataset d = synth_shift(oracle::tiny_synth(11));
  auto rejects = [&](auto mutate, const char* word) {
    TrainConfig cfg = tiny_train_config(d.num_items);
    mutate(cfg);
    CHECK_THROWS_WITH(train_joint(d.train, d.num_items, cfg), Catch::Matchers::ContainsSubstring(word));
  };
  rejects([](TrainConfig& c) { c.gamma = 0.0f; }, "gamma");
  rejects([](TrainConfig& c) { c.gamma = 1.5f; }, "gamma");
  rejects([](TrainConfig& c) { c.lr = -1.0f; }, "learning rate");
  rejects([](TrainConfig& c) { c.m = 0; }, "ensemble");
  rejects([](TrainConfig& c) { c.tau = 0.0f; }, "tau");
  rejects([](TrainConfig& c) { c.generator.input_dim = 7; }, "generator input width");
  CHECK_THROWS_AS(train_joint(std::vector<Session>{}, d.num_items, tiny_train_config(d.num_items)),
                  std::invalid_argument);
}

TEST_CASE("fine-tuning with zero steps returns the initial head") {
  DuetModel m = fresh_model(12);
  Rng rng(120);
  const Session s = oracle::gradcheck_batch(rng, 24)[0];
  const FinetuneResult r = finetune_baseline(m.backbone, m.global_params(), s, 0, 0.01f);
  CHECK(bit_equal(r.params, m.global_params()));
  CHECK(r.params.provenance == Provenance::kFineTuned);
  CHECK(r.losses.size() == 1);
}

TEST_CASE("fine-tuning descends at a small learning rate") {
  DuetModel m = fresh_model(13);
  Rng rng(130);
  const Session s = oracle::gradcheck_batch(rng, 24)[1];
  const FinetuneResult r = finetune_baseline(m.backbone, m.global_params(), s, 50, 0.01f);
  REQUIRE(r.losses.size() == 51);
  for (std::size_t i = 1; i < r.losses.size(); ++i) CHECK(r.losses[i] <= r.losses[i - 1]);
  CHECK(r.losses.back() < r.losses.front());
}

TEST_CASE("fine-tuning wall time grows linearly with steps") {
  TrainConfig cfg = oracle::gradcheck_config();
  cfg.model.hidden_dim = 32;
  cfg.model.embed_dim = 16;
  cfg.generator.input_dim = 16;
  DuetModel m = fresh_model(14, cfg);
  Rng rng(140);
  const Session s = oracle::gradcheck_batch(rng, 24)[0];
  auto per_step = [&](std::size_t steps) {
    double best = 1e300;
    for (int rep = 0; rep < 5; ++rep) best = std::min(best, finetune_baseline(m.backbone, m.global_params(), s, steps, 0.01f).wall_ms);
    return best / static_cast<double>(steps + 1);
  };
  const double short_run = per_step(40);
  const double long_run = per_step(160);
  INFO("per-step ms: " << short_run << " vs " << long_run);
  CHECK(long_run / short_run <= 2.0);
  CHECK(long_run / short_run >= 0.5);
}
