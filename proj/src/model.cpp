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

#include "duet/model.hpp"

#include <algorithm>
#include <cmath>

namespace duet {

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::kTrainedGlobal:
      return "trained-global";
    case Provenance::kGenerated:
      return "generated";
    case Provenance::kFineTuned:
      return "fine-tuned";
  }
  return "unknown";
}

bool bit_equal(const DynamicParams& a, const DynamicParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t n = 0; n < a.layers.size(); ++n) {
    if (!bit_equal(a.layers[n].kernel, b.layers[n].kernel) ||
        !bit_equal(a.layers[n].bias, b.layers[n].bias)) {
      return false;
    }
  }
  return true;
}

DynamicLayerSpec::DynamicLayerSpec(std::vector<LayerDims> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("dynamic layer spec: no layers");
  for (std::size_t n = 0; n < layers_.size(); ++n) {
    if (layers_[n].n_in == 0 || layers_[n].n_out == 0) {
      throw ShapeError("dynamic layer spec: layer " + std::to_string(n) + " has a zero dim");
    }
    if (n + 1 < layers_.size() && layers_[n].n_out != layers_[n + 1].n_in) {
      throw ShapeError("dynamic layer spec: layer " + std::to_string(n) + " outputs " +
                       std::to_string(layers_[n].n_out) + " but layer " + std::to_string(n + 1) +
                       " takes " + std::to_string(layers_[n + 1].n_in));
    }
  }
}

DynamicLayerSpec DynamicLayerSpec::chain(std::span<const std::uint32_t> widths) {
  if (widths.size() < 2) throw ShapeError("dynamic layer spec: need at least two widths");
  std::vector<LayerDims> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) layers.push_back({widths[i], widths[i + 1]});
  return DynamicLayerSpec(std::move(layers));
}

void DynamicLayerSpec::check(const DynamicParams& params) const {
  if (params.layers.size() != layers_.size()) {
    throw ShapeError("dynamic params have " + std::to_string(params.layers.size()) +
                     " layers, spec has " + std::to_string(layers_.size()));
  }
  for (std::size_t n = 0; n < layers_.size(); ++n) {
    const Shape want_k{layers_[n].n_in, layers_[n].n_out};
    const Shape want_b{1, layers_[n].n_out};
    if (params.layers[n].kernel.shape() != want_k || params.layers[n].bias.shape() != want_b) {
      throw ShapeError("dynamic layer " + std::to_string(n) + ": kernel " +
                       params.layers[n].kernel.shape().str() + " bias " +
                       params.layers[n].bias.shape().str() + ", expected " + want_k.str() + " / " +
                       want_b.str());
    }
  }
}

DynamicLayerSpec ModelDims::classifier_spec() const {
  const std::uint32_t widths[] = {static_cast<std::uint32_t>(hidden_dim),
                                  static_cast<std::uint32_t>(std::max<std::size_t>(1, hidden_dim / 2)),
                                  1u};
  return DynamicLayerSpec::chain(widths);
}

namespace {

float xavier_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
}

Dense init_dense(std::size_t n_in, std::size_t n_out, Rng& rng) {
  return Dense{Parameter(rng.uniform_tensor(n_in, n_out, xavier_limit(n_in, n_out))),
               Parameter(Tensor(1, n_out))};
}

}  // namespace

BackboneParams BackboneParams::init(const ModelDims& dims, Rng& rng) {
  if (dims.num_items == 0 || dims.embed_dim == 0 || dims.hidden_dim == 0) {
    throw ShapeError("backbone: item count and widths must be positive");
  }
  BackboneParams b;
  b.embedding = Parameter(rng.uniform_tensor(dims.num_items, dims.embed_dim, 1.0f));
  std::size_t width = 2 * dims.embed_dim;
  for (std::size_t k = 0; k < dims.hidden_layers; ++k) {
    b.hidden.push_back(init_dense(width, dims.hidden_dim, rng));
    width = dims.hidden_dim;
  }
  return b;
}

std::size_t BackboneParams::feature_width() const {
  return hidden.empty() ? 2 * embedding.value.cols() : hidden.back().weight.value.cols();
}

std::vector<Dense> init_dense_chain(const DynamicLayerSpec& spec, Rng& rng) {
  std::vector<Dense> layers;
  for (const LayerDims& d : spec.layers()) layers.push_back(init_dense(d.n_in, d.n_out, rng));
  return layers;
}

DynamicParams to_dynamic_params(const std::vector<Dense>& layers, Provenance provenance) {
  DynamicParams p;
  p.provenance = provenance;
  for (const Dense& d : layers) p.layers.push_back({d.weight.value, d.bias.value});
  return p;
}

BackboneVars bind_trainable(Graph& g, BackboneParams& b) {
  BackboneVars v;
  v.embedding = g.param(b.embedding);
  for (Dense& d : b.hidden) v.hidden.push_back({g.param(d.weight), g.param(d.bias)});
  return v;
}

BackboneVars bind_constant(Graph& g, const BackboneParams& b) {
  BackboneVars v;
  v.embedding = g.constant_ref(b.embedding.value);
  for (const Dense& d : b.hidden) {
    v.hidden.push_back({g.constant_ref(d.weight.value), g.constant_ref(d.bias.value)});
  }
  return v;
}

std::vector<DenseOf<Var>> bind_trainable(Graph& g, std::vector<Dense>& layers) {
  std::vector<DenseOf<Var>> v;
  for (Dense& d : layers) v.push_back({g.param(d.weight), g.param(d.bias)});
  return v;
}

std::vector<DenseOf<Var>> bind_constant(Graph& g, const DynamicParams& p) {
  std::vector<DenseOf<Var>> v;
  for (const DynamicLayer& l : p.layers) v.push_back({g.constant_ref(l.kernel), g.constant_ref(l.bias)});
  return v;
}

std::vector<std::uint32_t> canonical_order(std::span<const std::uint32_t> items) {
  std::vector<std::uint32_t> sorted(items.begin(), items.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted;
}

Var backbone_forward(Graph& g, const BackboneVars& b, std::span<const std::uint32_t> context,
                     std::span<const std::uint32_t> candidates) {
  if (context.empty()) throw std::invalid_argument("backbone_forward: empty context");
  if (candidates.empty()) throw std::invalid_argument("backbone_forward: no candidates");
  const std::vector<std::uint32_t> ctx = canonical_order(context);
  Var pooled = g.mean_rows(g.gather_rows(b.embedding, ctx));
  Var ones = g.constant(Tensor(candidates.size(), 1, 1.0f));
  Var x = g.concat_cols(g.matmul(ones, pooled), g.gather_rows(b.embedding, candidates));
  for (const DenseOf<Var>& layer : b.hidden) x = g.relu(g.affine(x, layer.weight, layer.bias));
  return x;
}

Var classifier_forward(Graph& g, Var features, std::span<const DenseOf<Var>> layers) {
  Var x = features;
  for (std::size_t n = 0; n < layers.size(); ++n) {
    const Tensor& k = g.value(layers[n].weight);
    if (g.value(x).cols() != k.rows()) {
      throw ShapeError("classifier layer " + std::to_string(n) + ": input width " +
                       std::to_string(g.value(x).cols()) + " vs kernel " + k.shape().str());
    }
    x = g.affine(x, layers[n].weight, layers[n].bias);
    if (n + 1 < layers.size()) x = g.relu(x);
  }
  return x;
}

PrimaryModel::PrimaryModel(std::shared_ptr<const BackboneParams> backbone, DynamicLayerSpec spec,
                           DynamicParams initial)
    : backbone_(std::move(backbone)), spec_(std::move(spec)) {
  if (!backbone_) throw std::invalid_argument("primary model: null backbone");
  if (backbone_->feature_width() != spec_.input_width()) {
    throw ShapeError("primary model: backbone emits " + std::to_string(backbone_->feature_width()) +
                     " features, classifier takes " + std::to_string(spec_.input_width()));
  }
  install_dynamic_params(std::move(initial));
}

Tensor PrimaryModel::backbone_forward(std::span<const std::uint32_t> context,
                                      std::span<const std::uint32_t> candidates) const {
  Graph g;
  BackboneVars b = bind_constant(g, *backbone_);
  return g.value(duet::backbone_forward(g, b, context, candidates));
}

Tensor PrimaryModel::classifier_forward(const Tensor& features, const DynamicParams& params) {
  Graph g;
  auto layers = bind_constant(g, params);
  return g.value(duet::classifier_forward(g, g.constant_ref(features), layers));
}

Tensor PrimaryModel::score(std::span<const std::uint32_t> context,
                           std::span<const std::uint32_t> candidates) const {
  Graph g;
  BackboneVars b = bind_constant(g, *backbone_);
  auto layers = bind_constant(g, dynamic_);
  return g.value(duet::classifier_forward(g, duet::backbone_forward(g, b, context, candidates), layers));
}

void PrimaryModel::install_dynamic_params(DynamicParams params) {
  spec_.check(params);
  dynamic_ = std::move(params);
}

StaticDynamicSplit split_static_dynamic(BackboneParams backbone, const DynamicLayerSpec& spec) {
  backbone.frozen = true;
  if (backbone.feature_width() != spec.input_width()) {
    throw ShapeError("split: backbone emits " + std::to_string(backbone.feature_width()) +
                     " features, spec takes " + std::to_string(spec.input_width()));
  }
  return {std::make_shared<const BackboneParams>(std::move(backbone)), spec};
}

}  // namespace duet
