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

#include "duet/swa.hpp"

#include <string>

namespace duet {

namespace {

void require_tau(float tau) {
  if (!(tau > 0.0f)) throw std::invalid_argument("swa: temperature must be > 0, got " + std::to_string(tau));
}

void require_same_shapes(std::span<const GeneratorParams> generators) {
  if (generators.empty()) throw std::invalid_argument("swa: ensemble needs at least one generator");
  std::vector<Shape> shapes;
  for_each_tensor(generators[0], [&](const std::string&, const Parameter& p) { shapes.push_back(p.value.shape()); });
  for (std::size_t i = 1; i < generators.size(); ++i) {
    std::size_t k = 0;
    for_each_tensor(generators[i], [&](const std::string& name, const Parameter& p) {
      if (k >= shapes.size() || p.value.shape() != shapes[k]) {
        throw ShapeError("swa: generator " + std::to_string(i) + " tensor '" + name + "' is " +
                         p.value.shape().str() + ", generator 0 has " +
                         (k < shapes.size() ? shapes[k].str() : std::string("none")));
      }
      ++k;
    });
    if (k != shapes.size()) {
      throw ShapeError("swa: generator " + std::to_string(i) + " has a different tensor count");
    }
  }
}

// Flattened W1 row of one generator (1 x D).
Var w1_row(Graph& g, const GeneratorVars& gen) {
  Var row;
  for (const LayerGeneratorOf<Var>& l : gen.layers) {
    const Tensor& w1 = g.value(l.w1);
    Var flat = g.reshape(l.w1, 1, w1.size());
    row = row.valid() ? g.concat_cols(row, flat) : flat;
  }
  return row;
}

Var similarity(Graph& g, std::span<const GeneratorVars> members) {
  std::vector<Var> rows;
  for (const GeneratorVars& m : members) rows.push_back(w1_row(g, m));
  Var r = g.concat_rows(rows);
  return g.matmul(r, g.transpose(r));
}

Var weights_from_similarity(Graph& g, Var s, float tau) {
  Var scores = g.share_of_total(g.transpose(g.row_sums(s)));
  return g.softmax_rows(g.scale(scores, 1.0f / tau));
}

GeneratorVars blend_members(Graph& g, Var weights, std::span<const GeneratorVars> members) {
  // Walk the slots of member 0 and blend the matching slot of every member.
  std::vector<std::vector<Var>> slots;
  for (const GeneratorVars& m : members) {
    std::vector<Var> flat;
    for_each_tensor(m, [&](const std::string&, const Var& v) { flat.push_back(v); });
    slots.push_back(std::move(flat));
  }
  std::size_t k = 0;
  std::vector<Var> parts(members.size());
  GeneratorVars shape = members[0];
  return map_generator<Var>(shape, [&](Var&) {
    for (std::size_t i = 0; i < members.size(); ++i) parts[i] = slots[i][k];
    ++k;
    return g.blend(weights, parts);
  });
}

}  // namespace

void SwaEnsemble::validate() const {
  require_tau(tau);
  require_same_shapes(generators);
}

Tensor similarity_matrix(std::span<const GeneratorParams> generators) {
  require_same_shapes(generators);
  Graph g;
  std::vector<GeneratorVars> members;
  for (const GeneratorParams& gen : generators) members.push_back(bind_constant(g, gen));
  return g.value(similarity(g, members));
}

Tensor importance_weights(const Tensor& similarity_matrix, float tau) {
  require_tau(tau);
  if (similarity_matrix.rows() == 0 || similarity_matrix.rows() != similarity_matrix.cols()) {
    throw ShapeError("importance_weights: similarity must be square and non-empty, got " +
                     similarity_matrix.shape().str());
  }
  Graph g;
  return g.value(weights_from_similarity(g, g.constant_ref(similarity_matrix), tau));
}

GeneratorParams combine_with_weights(std::span<const GeneratorParams> generators, const Tensor& weights) {
  require_same_shapes(generators);
  Graph g;
  std::vector<GeneratorVars> members;
  for (const GeneratorParams& gen : generators) members.push_back(bind_constant(g, gen));
  GeneratorVars fused = blend_members(g, g.constant_ref(weights), members);
  return map_generator<Parameter>(fused, [&](Var v) { return Parameter(g.value(v)); });
}

GeneratorParams combine(const SwaEnsemble& ensemble) {
  ensemble.validate();
  const Tensor p = importance_weights(similarity_matrix(ensemble.generators), ensemble.tau);
  return combine_with_weights(ensemble.generators, p);
}

FusedGenerator fuse(Graph& g, std::span<const GeneratorVars> members, float tau) {
  require_tau(tau);
  if (members.empty()) throw std::invalid_argument("swa: ensemble needs at least one generator");
  FusedGenerator out;
  out.similarity = similarity(g, members);
  out.weights = weights_from_similarity(g, out.similarity, tau);
  out.generator = blend_members(g, out.weights, members);
  return out;
}

}  // namespace duet
