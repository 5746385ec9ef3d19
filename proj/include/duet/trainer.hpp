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

// Cloud-side joint training of the backbone, the global classifier head and
// the generator ensemble, plus the on-device fine-tuning baseline.
//
// Per training session the loss is
//   ppg:  sum_t gamma^t bce(y, score with generated head) / sum_t gamma^t
//   umn:  mean bce(y, score with the global head)
// with the ensemble fused inside every step, so gradients reach all members
// through both the blend and the importance weights. Generated kernels are
// graph intermediates and never optimizer state.

#ifndef DUET_TRAINER_HPP_
#define DUET_TRAINER_HPP_

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "duet/checkpoint.hpp"
#include "duet/dataio.hpp"
#include "duet/graph.hpp"
#include "duet/model.hpp"
#include "duet/ppg.hpp"

namespace duet {

enum class OptimizerKind : std::uint8_t { kSgd, kAdam };
enum class TrainMode : std::uint8_t { kJoint, kUmnOnly };

struct TrainConfig {
  float gamma = 0.9f;
  float lr = 0.01f;
  std::size_t epochs = 10;
  std::size_t batch = 8;
  std::uint64_t seed = 1;
  std::size_t m = 5;
  float tau = 1.0f;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  TrainMode mode = TrainMode::kJoint;
  ModelDims model;
  GeneratorDims generator;
  // Optional cap on optimizer steps (0 = no cap).
  std::size_t max_steps = 0;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Everything the cloud owns.
struct DuetModel {
  BackboneParams backbone;
  DynamicLayerSpec spec;
  std::vector<Dense> global_head;  // trained global classifier
  std::vector<GeneratorParams> generators;
  float tau = 1.0f;

  static DuetModel init(const TrainConfig& cfg, Rng& rng);
  DynamicParams global_params() const { return to_dynamic_params(global_head, Provenance::kTrainedGlobal); }
};

// Fixed visiting order over every trainable tensor.
template <typename M, typename F>
  requires std::same_as<std::remove_const_t<M>, DuetModel>
void for_each_parameter(M& m, F&& f) {
  for_each_tensor(m.backbone, [&](const std::string& n, auto& p) { f("umn/backbone/" + n, p); });
  for (std::size_t k = 0; k < m.global_head.size(); ++k) {
    f("umn/classifier/" + std::to_string(k) + "/kernel", m.global_head[k].weight);
    f("umn/classifier/" + std::to_string(k) + "/bias", m.global_head[k].bias);
  }
  for (std::size_t g = 0; g < m.generators.size(); ++g) {
    for_each_tensor(m.generators[g],
                    [&](const std::string& n, auto& p) { f("ppg/" + std::to_string(g) + "/" + n, p); });
  }
}

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

struct Checkpoint {
  DuetModel model;
  ConfigEcho config;
  std::uint64_t step = 0;
};

// ---------------------------------------------------------------------------
// Losses (graph level, so they can be differentiated).
// ---------------------------------------------------------------------------

// Normalised gamma^t weights, one per labeled sample.
std::vector<float> position_weights(std::span<const LabeledSample> samples, float gamma);

// Raw scores (N x 1) for a session's labeled samples under the given head.
Var session_scores(Graph& g, const BackboneVars& backbone, const Session& session,
                   std::span<const DenseOf<Var>> head);

// Mean bce over every labeled sample in the batch.
Var umn_loss(Graph& g, const BackboneVars& backbone, std::span<const DenseOf<Var>> head,
             std::span<const Session> batch);

// gamma-weighted bce of the session under parameters generated from its context.
Var ppg_loss(Graph& g, const BackboneVars& backbone, const GeneratorVars& generator,
             const DynamicLayerSpec& spec, const Session& session, float gamma);

// Value-level conveniences (constants only, no gradients).
float umn_loss(const DuetModel& model, std::span<const Session> batch);
float ppg_loss(const DuetModel& model, const GeneratorParams& generator, const Session& session, float gamma);

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<float> step_losses;  // batch loss before each update
};

// Throws std::invalid_argument for an invalid config or an empty dataset.
TrainResult train_joint(std::span<const Session> sessions, std::size_t num_items, const TrainConfig& cfg,
                        ConfigEcho echo = {});
// Continues training an existing model.
TrainResult train_joint(DuetModel model, std::span<const Session> sessions, const TrainConfig& cfg,
                        ConfigEcho echo = {});

struct FinetuneResult {
  DynamicParams params;       // provenance fine-tuned
  std::vector<float> losses;  // session loss before each step, then after the last
  double wall_ms = 0.0;
};

// `steps` full-batch SGD steps on the session's mean bce. Only the head is
// updated; backbone tensors are graph constants.
FinetuneResult finetune_baseline(const BackboneParams& backbone, const DynamicParams& initial,
                                 const Session& session, std::size_t steps, float lr);

// ---------------------------------------------------------------------------
// Persistence.
// ---------------------------------------------------------------------------

std::vector<NamedTensor> to_tensor_table(const Checkpoint& ckpt);
Checkpoint from_tensor_table(const std::vector<NamedTensor>& table);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace duet

#endif  // DUET_TRAINER_HPP_
