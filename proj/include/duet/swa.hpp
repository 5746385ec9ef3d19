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

// Stable weight adapter: fuses m generators into one.
//
// Row g of R is generator g's W1 matrices flattened layer-major, row-major
// within each layer. S = R R^T, p' = row sums of S, and
//   p = softmax((p' / sum(p')) / tau).
// The row sums are taken as shares of their total, so p depends on how
// similar the members are and not on their overall scale.
// Every tensor of the fused generator is sum_g p_g * tensor_g.

#ifndef DUET_SWA_HPP_
#define DUET_SWA_HPP_

#include <span>
#include <vector>

#include "duet/graph.hpp"
#include "duet/ppg.hpp"

namespace duet {

struct SwaEnsemble {
  std::vector<GeneratorParams> generators;
  float tau = 1.0f;

  // Throws unless m >= 1, tau > 0 and all members share tensor shapes.
  void validate() const;
  std::size_t size() const { return generators.size(); }
};

// Throws ShapeError if the generators are not shape-identical.
Tensor similarity_matrix(std::span<const GeneratorParams> generators);
// 1 x m weights; throws std::invalid_argument for tau <= 0.
Tensor importance_weights(const Tensor& similarity, float tau);
GeneratorParams combine_with_weights(std::span<const GeneratorParams> generators, const Tensor& weights);
GeneratorParams combine(const SwaEnsemble& ensemble);

// Differentiable fusion used inside the training loop.
struct FusedGenerator {
  GeneratorVars generator;
  Var similarity;  // m x m
  Var weights;     // 1 x m
};

FusedGenerator fuse(Graph& g, std::span<const GeneratorVars> members, float tau);

}  // namespace duet

#endif  // DUET_SWA_HPP_
