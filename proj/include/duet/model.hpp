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

// The primary model: a frozen backbone that turns (context, candidate) pairs
// into features, followed by a chain of fully connected "dynamic" layers whose
// parameters are swapped in per session.
//
// Backbone input row for a candidate c with context items h_1..h_k:
//   [ mean_j emb(h_j) | emb(c) ]  ->  relu(affine) x hidden_layers
// The context is pooled in ascending item-id order so the features do not
// depend on the order the context was supplied in.

#ifndef DUET_MODEL_HPP_
#define DUET_MODEL_HPP_

#include <concepts>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "duet/graph.hpp"
#include "duet/rng.hpp"
#include "duet/tensor.hpp"

namespace duet {

template <typename T>
struct DenseOf {
  T weight;
  T bias;
};
using Dense = DenseOf<Parameter>;

struct LayerDims {
  std::uint32_t n_in = 0;
  std::uint32_t n_out = 0;
  friend bool operator==(const LayerDims&, const LayerDims&) = default;
};

enum class Provenance : std::uint8_t { kTrainedGlobal, kGenerated, kFineTuned };
const char* to_string(Provenance p);

struct DynamicLayer {
  Tensor kernel;  // (n_in, n_out)
  Tensor bias;    // (1, n_out)
};

struct DynamicParams {
  std::vector<DynamicLayer> layers;
  Provenance provenance = Provenance::kTrainedGlobal;
};

bool bit_equal(const DynamicParams& a, const DynamicParams& b);

// Shapes of the replaceable classifier chain.
class DynamicLayerSpec {
 public:
  DynamicLayerSpec() = default;
  // Throws ShapeError unless non-empty, all dims positive and consecutive
  // layers chain (layer n's n_out == layer n+1's n_in).
  explicit DynamicLayerSpec(std::vector<LayerDims> layers);
  // {32, 16, 1} -> 32x16, 16x1.
  static DynamicLayerSpec chain(std::span<const std::uint32_t> widths);

  std::size_t size() const { return layers_.size(); }
  const LayerDims& operator[](std::size_t n) const { return layers_.at(n); }
  const std::vector<LayerDims>& layers() const { return layers_; }
  std::uint32_t input_width() const { return layers_.front().n_in; }
  std::uint32_t output_width() const { return layers_.back().n_out; }

  // Throws ShapeError naming the first layer whose tensors disagree.
  void check(const DynamicParams& params) const;

  friend bool operator==(const DynamicLayerSpec&, const DynamicLayerSpec&) = default;

 private:
  std::vector<LayerDims> layers_;
};

struct ModelDims {
  std::size_t num_items = 0;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;
  std::size_t hidden_layers = 2;

  std::size_t feature_width() const { return hidden_dim; }
  // Classifier widths hidden -> hidden/2 -> 1.
  DynamicLayerSpec classifier_spec() const;
};

struct BackboneParams {
  Parameter embedding;  // (num_items, embed_dim)
  std::vector<Dense> hidden;
  bool frozen = false;

  static BackboneParams init(const ModelDims& dims, Rng& rng);
  std::size_t num_items() const { return embedding.value.rows(); }
  std::size_t feature_width() const;
};

// Fixed visiting order; used for checkpoints and optimizers.
template <typename B, typename F>
  requires std::same_as<std::remove_const_t<B>, BackboneParams>
void for_each_tensor(B& b, F&& f) {
  f(std::string("embedding"), b.embedding);
  for (std::size_t k = 0; k < b.hidden.size(); ++k) {
    f("hidden/" + std::to_string(k) + "/weight", b.hidden[k].weight);
    f("hidden/" + std::to_string(k) + "/bias", b.hidden[k].bias);
  }
}

// Xavier-uniform initialised trainable classifier chain.
std::vector<Dense> init_dense_chain(const DynamicLayerSpec& spec, Rng& rng);
DynamicParams to_dynamic_params(const std::vector<Dense>& layers, Provenance provenance);

// ---------------------------------------------------------------------------
// Graph-level forward passes, shared by training and inference.
// ---------------------------------------------------------------------------

struct BackboneVars {
  Var embedding;
  std::vector<DenseOf<Var>> hidden;
};

BackboneVars bind_trainable(Graph& g, BackboneParams& b);
BackboneVars bind_constant(Graph& g, const BackboneParams& b);
std::vector<DenseOf<Var>> bind_trainable(Graph& g, std::vector<Dense>& layers);
std::vector<DenseOf<Var>> bind_constant(Graph& g, const DynamicParams& p);

// Context items sorted ascending, the pooling order.
std::vector<std::uint32_t> canonical_order(std::span<const std::uint32_t> items);

// One feature row per candidate.
Var backbone_forward(Graph& g, const BackboneVars& b, std::span<const std::uint32_t> context,
                     std::span<const std::uint32_t> candidates);
// Layer chain with relu between layers; returns raw scores (logits).
Var classifier_forward(Graph& g, Var features, std::span<const DenseOf<Var>> layers);

// ---------------------------------------------------------------------------
// The device-side model object.
// ---------------------------------------------------------------------------

class PrimaryModel {
 public:
  PrimaryModel(std::shared_ptr<const BackboneParams> backbone, DynamicLayerSpec spec,
               DynamicParams initial);

  Tensor backbone_forward(std::span<const std::uint32_t> context,
                          std::span<const std::uint32_t> candidates) const;
  // Pure function of (features, params).
  static Tensor classifier_forward(const Tensor& features, const DynamicParams& params);
  // Raw scores with the installed dynamic params.
  Tensor score(std::span<const std::uint32_t> context,
               std::span<const std::uint32_t> candidates) const;

  // Validates against the spec first; on mismatch the model is left as is.
  void install_dynamic_params(DynamicParams params);

  const BackboneParams& backbone() const { return *backbone_; }
  std::shared_ptr<const BackboneParams> shared_backbone() const { return backbone_; }
  const DynamicLayerSpec& spec() const { return spec_; }
  const DynamicParams& dynamic_params() const { return dynamic_; }

 private:
  std::shared_ptr<const BackboneParams> backbone_;
  DynamicLayerSpec spec_;
  DynamicParams dynamic_;
};

struct StaticDynamicSplit {
  std::shared_ptr<const BackboneParams> backbone;
  DynamicLayerSpec spec;
};

// Marks the backbone frozen and hands it out with the classifier spec.
StaticDynamicSplit split_static_dynamic(BackboneParams backbone, const DynamicLayerSpec& spec);

}  // namespace duet

#endif  // DUET_MODEL_HPP_
