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

#include "duet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

#include "duet/swa.hpp"

namespace duet {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (!(gamma > 0.0f && gamma <= 1.0f)) fail("gamma must lie in (0, 1], got " + std::to_string(gamma));
  if (!(lr >= 0.0f) || !std::isfinite(lr)) fail("learning rate must be finite and >= 0");
  if (m == 0) fail("ensemble size m must be >= 1");
  if (!(tau > 0.0f)) fail("tau must be > 0");
  if (epochs == 0) fail("epochs must be >= 1");
  if (batch == 0) fail("batch must be >= 1");
  if (model.embed_dim != generator.input_dim) {
    fail("generator input width " + std::to_string(generator.input_dim) + " != embedding width " +
         std::to_string(model.embed_dim));
  }
}

DuetModel DuetModel::init(const TrainConfig& cfg, Rng& rng) {
  DuetModel m;
  m.backbone = BackboneParams::init(cfg.model, rng);
  m.spec = cfg.model.classifier_spec();
  m.global_head = init_dense_chain(m.spec, rng);
  for (std::size_t g = 0; g < cfg.m; ++g) m.generators.push_back(init_generator(cfg.generator, m.spec, rng));
  m.tau = cfg.tau;
  return m;
}

std::vector<float> position_weights(std::span<const LabeledSample> samples, float gamma) {
  std::vector<float> w;
  double total = 0.0;
  for (const LabeledSample& s : samples) {
    w.push_back(std::pow(gamma, static_cast<float>(s.position)));
    total += w.back();
  }
  for (float& v : w) v = static_cast<float>(v / total);
  return w;
}

namespace {

std::vector<std::uint32_t> candidates_of(const Session& s) {
  std::vector<std::uint32_t> out;
  for (const LabeledSample& x : s.samples) out.push_back(x.item);
  return out;
}

std::vector<float> labels_of(const Session& s) {
  std::vector<float> out;
  for (const LabeledSample& x : s.samples) out.push_back(x.label);
  return out;
}

void require_samples(const Session& s, const char* who) {
  if (s.context.empty()) throw std::invalid_argument(std::string(who) + ": session has no context");
  if (s.samples.empty()) throw std::invalid_argument(std::string(who) + ": session has no labeled samples");
}

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, float lr) : kind_(kind), lr_(lr) {}

  template <typename Params>
  void step(Params& params) {
    ++t_;
    std::size_t k = 0;
    const float c1 = 1.0f - std::pow(kBeta1, static_cast<float>(t_));
    const float c2 = 1.0f - std::pow(kBeta2, static_cast<float>(t_));
    for_each_parameter(params, [&](const std::string&, Parameter& p) {
      if (kind_ == OptimizerKind::kSgd) {
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr_ * p.grad[i];
      } else {
        if (k == m_.size()) {
          m_.emplace_back(p.value.rows(), p.value.cols());
          v_.emplace_back(p.value.rows(), p.value.cols());
        }
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
          const float g = p.grad[i];
          m[i] = kBeta1 * m[i] + (1.0f - kBeta1) * g;
          v[i] = kBeta2 * v[i] + (1.0f - kBeta2) * g * g;
          p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
        }
      }
      p.zero_grad();
      ++k;
    });
  }

 private:
  static constexpr float kBeta1 = 0.9f;
  static constexpr float kBeta2 = 0.999f;
  static constexpr float kEps = 1e-8f;

  OptimizerKind kind_;
  float lr_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace

Var session_scores(Graph& g, const BackboneVars& backbone, const Session& session,
                   std::span<const DenseOf<Var>> head) {
  const std::vector<std::uint32_t> cands = candidates_of(session);
  return classifier_forward(g, backbone_forward(g, backbone, session.context, cands), head);
}

Var umn_loss(Graph& g, const BackboneVars& backbone, std::span<const DenseOf<Var>> head,
             std::span<const Session> batch) {
  if (batch.empty()) throw std::invalid_argument("umn_loss: empty batch");
  std::vector<Var> parts;
  std::vector<float> counts;
  float total = 0.0f;
  for (const Session& s : batch) {
    require_samples(s, "umn_loss");
    const std::vector<float> labels = labels_of(s);
    const std::vector<float> ones(labels.size(), 1.0f);
    parts.push_back(g.sigmoid_cross_entropy(session_scores(g, backbone, s, head), labels, ones));
    counts.push_back(static_cast<float>(labels.size()));
    total += counts.back();
  }
  if (parts.size() == 1) return parts[0];
  for (float& c : counts) c /= total;
  return g.blend(g.constant(Tensor(1, counts.size(), counts)), parts);
}

Var ppg_loss(Graph& g, const BackboneVars& backbone, const GeneratorVars& generator,
             const DynamicLayerSpec& spec, const Session& session, float gamma) {
  require_samples(session, "ppg_loss");
  Var shared = shared_encoder(g, generator, pool_session(g, backbone.embedding, session.context));
  const std::vector<DenseOf<Var>> head = generate_all(g, shared, generator, spec);
  return g.sigmoid_cross_entropy(session_scores(g, backbone, session, head), labels_of(session),
                                 position_weights(session.samples, gamma));
}

float umn_loss(const DuetModel& model, std::span<const Session> batch) {
  Graph g;
  BackboneVars b = bind_constant(g, model.backbone);
  const DynamicParams head = model.global_params();
  auto layers = bind_constant(g, head);
  return g.value(umn_loss(g, b, layers, batch)).item();
}

float ppg_loss(const DuetModel& model, const GeneratorParams& generator, const Session& session, float gamma) {
  Graph g;
  BackboneVars b = bind_constant(g, model.backbone);
  GeneratorVars gen = bind_constant(g, generator);
  return g.value(ppg_loss(g, b, gen, model.spec, session, gamma)).item();
}

TrainResult train_joint(std::span<const Session> sessions, std::size_t num_items, const TrainConfig& cfg,
                        ConfigEcho echo) {
  cfg.validate();
  TrainConfig c = cfg;
  c.model.num_items = num_items;
  Rng rng(Rng::derive(cfg.seed, 0));
  return train_joint(DuetModel::init(c, rng), sessions, cfg, std::move(echo));
}

TrainResult train_joint(DuetModel model, std::span<const Session> sessions, const TrainConfig& cfg,
                        ConfigEcho echo) {
  cfg.validate();
  if (sessions.empty()) throw std::invalid_argument("train_joint: dataset has no sessions");
  if (cfg.mode == TrainMode::kJoint && model.generators.empty()) {
    throw std::invalid_argument("train_joint: joint mode needs at least one generator");
  }

  TrainResult result;
  Optimizer opt(cfg.optimizer, cfg.lr);
  std::vector<std::size_t> order(sessions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(Rng::derive(cfg.seed, 1 + epoch));
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      Graph g;
      BackboneVars bb = bind_trainable(g, model.backbone);
      std::vector<DenseOf<Var>> head = bind_trainable(g, model.global_head);
      FusedGenerator fused;
      if (cfg.mode == TrainMode::kJoint) {
        std::vector<GeneratorVars> members;
        for (GeneratorParams& gen : model.generators) members.push_back(bind_trainable(g, gen));
        fused = fuse(g, members, model.tau);
      }
      std::vector<Var> parts;
      for (std::size_t i = start; i < end; ++i) {
        const Session& s = sessions[order[i]];
        parts.push_back(umn_loss(g, bb, head, std::span<const Session>(&s, 1)));
        if (cfg.mode == TrainMode::kJoint) {
          parts.push_back(ppg_loss(g, bb, fused.generator, model.spec, s, cfg.gamma));
        }
      }
      const float share = 1.0f / static_cast<float>(end - start);
      Var loss = g.blend(g.constant(Tensor(1, parts.size(), share)), parts);
      result.step_losses.push_back(g.value(loss).item());
      g.backward(loss);
      opt.step(model);
      ++step;
      if (cfg.max_steps != 0 && step >= cfg.max_steps) break;
    }
    if (cfg.max_steps != 0 && step >= cfg.max_steps) break;
  }

  model.backbone.frozen = true;
  result.checkpoint = Checkpoint{std::move(model), std::move(echo), step};
  return result;
}

FinetuneResult finetune_baseline(const BackboneParams& backbone, const DynamicParams& initial,
                                 const Session& session, std::size_t steps, float lr) {
  require_samples(session, "finetune_baseline");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Dense> head;
  for (const DynamicLayer& l : initial.layers) head.push_back({Parameter(l.kernel), Parameter(l.bias)});
  const std::vector<float> labels = labels_of(session);
  const std::vector<float> ones(labels.size(), 1.0f);

  FinetuneResult out;
  for (std::size_t step = 0; step <= steps; ++step) {
    Graph g;
    BackboneVars b = bind_constant(g, backbone);
    std::vector<DenseOf<Var>> layers = bind_trainable(g, head);
    Var loss = g.sigmoid_cross_entropy(session_scores(g, b, session, layers), labels, ones);
    out.losses.push_back(g.value(loss).item());
    if (step == steps) break;
    g.backward(loss);
    for (Dense& d : head) {
      for (Parameter* p : {&d.weight, &d.bias}) {
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr * p->grad[i];
        p->zero_grad();
      }
    }
  }
  out.params = to_dynamic_params(head, Provenance::kFineTuned);
  out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// Persistence.
// ---------------------------------------------------------------------------

std::vector<NamedTensor> to_tensor_table(const Checkpoint& ckpt) {
  std::vector<NamedTensor> out;
  const DynamicLayerSpec& spec = ckpt.model.spec;
  Tensor dims(spec.size(), 2);
  for (std::size_t n = 0; n < spec.size(); ++n) {
    dims(n, 0) = static_cast<float>(spec[n].n_in);
    dims(n, 1) = static_cast<float>(spec[n].n_out);
  }
  out.push_back(NamedTensor::from("umn/spec", dims));
  for_each_parameter(ckpt.model, [&](const std::string& name, const Parameter& p) {
    out.push_back(NamedTensor::from(name, p.value));
  });
  out.push_back(NamedTensor::scalar("swa/tau", ckpt.model.tau));
  for (const auto& [key, value] : ckpt.config) out.push_back(NamedTensor::text("config/" + key, value));
  out.push_back(NamedTensor::text("meta/step", std::to_string(ckpt.step)));
  return out;
}

Checkpoint from_tensor_table(const std::vector<NamedTensor>& table) {
  using Kind = CheckpointError::Kind;
  std::map<std::string, const NamedTensor*> by_name;
  for (const NamedTensor& t : table) {
    if (!by_name.emplace(t.name, &t).second) {
      throw CheckpointError(Kind::kCorrupt, "checkpoint: duplicate tensor '" + t.name + "'");
    }
  }
  std::size_t used = 0;
  auto has = [&](const std::string& name) { return by_name.count(name) != 0; };
  auto take = [&](const std::string& name) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError(Kind::kCorrupt, "checkpoint: missing tensor '" + name + "'");
    ++used;
    return *it->second;
  };
  auto param = [&](const std::string& name) { return Parameter(take(name).tensor()); };

  Checkpoint ckpt;
  DuetModel& m = ckpt.model;
  try {
    const Tensor dims = take("umn/spec").tensor();
    if (dims.cols() != 2) throw CheckpointError(Kind::kCorrupt, "checkpoint: umn/spec must be N x 2");
    std::vector<LayerDims> layers;
    for (std::size_t n = 0; n < dims.rows(); ++n) {
      layers.push_back({static_cast<std::uint32_t>(dims(n, 0)), static_cast<std::uint32_t>(dims(n, 1))});
    }
    m.spec = DynamicLayerSpec(std::move(layers));

    m.backbone.embedding = param("umn/backbone/embedding");
    for (std::size_t k = 0; has("umn/backbone/hidden/" + std::to_string(k) + "/weight"); ++k) {
      const std::string p = "umn/backbone/hidden/" + std::to_string(k) + "/";
      m.backbone.hidden.push_back({param(p + "weight"), param(p + "bias")});
    }
    m.backbone.frozen = true;
    for (std::size_t n = 0; n < m.spec.size(); ++n) {
      const std::string p = "umn/classifier/" + std::to_string(n) + "/";
      m.global_head.push_back({param(p + "kernel"), param(p + "bias")});
    }
    m.spec.check(m.global_params());

    for (std::size_t g = 0; has("ppg/" + std::to_string(g) + "/encoder/0/weight"); ++g) {
      const std::string prefix = "ppg/" + std::to_string(g) + "/";
      GeneratorParams gen;
      for (std::size_t k = 0; has(prefix + "encoder/" + std::to_string(k) + "/weight"); ++k) {
        gen.encoder.push_back({Parameter(), Parameter()});
      }
      gen.layers.resize(m.spec.size());
      for_each_tensor(gen, [&](const std::string& name, Parameter& p) { p = param(prefix + name); });
      if (target_spec(gen) != m.spec) {
        throw CheckpointError(Kind::kCorrupt, "checkpoint: generator " + std::to_string(g) +
                                                  " does not match umn/spec");
      }
      m.generators.push_back(std::move(gen));
    }

    m.tau = take("swa/tau").data.at(0);
    for (const NamedTensor& t : table) {
      if (t.name.starts_with("config/")) {
        ckpt.config.emplace_back(t.name.substr(7), t.as_text());
        ++used;
      }
    }
    const std::string step = take("meta/step").as_text();
    ckpt.step = std::stoull(step);
  } catch (const ShapeError& e) {
    throw CheckpointError(Kind::kCorrupt, std::string("checkpoint: ") + e.what());
  } catch (const std::logic_error& e) {
    throw CheckpointError(Kind::kCorrupt, std::string("checkpoint: ") + e.what());
  }
  if (used != table.size()) {
    throw CheckpointError(Kind::kCorrupt, "checkpoint: " + std::to_string(table.size() - used) +
                                              " unrecognised tensors");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_tensor_table(path, to_tensor_table(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return from_tensor_table(read_tensor_table(path));
}

}  // namespace duet
