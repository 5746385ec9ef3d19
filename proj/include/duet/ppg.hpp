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

// Personalized parameter generator.
//
// A session's unlabeled context items are pooled (mean of item embeddings,
// ascending id order) and passed through a shared encoder E_share to get a
// 1 x C_s representation. For every dynamic layer n a linear head maps that
// representation to a layer embedding e_n (1 x C_e), and a two-layer affine
// generator turns e_n into the layer kernel:
//
//   w_n = (e_n W1 + B1) W2 + B2          reshaped row-major to (n_in, n_out)
//   b_n = e_n Wb + bb                    the layer's additive bias
//
// Generated tensors are graph intermediates. Only the generator's own
// parameters (and, through the pooled input, the item embeddings) receive
// gradients.

#ifndef DUET_PPG_HPP_
#define DUET_PPG_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "duet/graph.hpp"
#include "duet/model.hpp"
#include "duet/rng.hpp"

namespace duet {

template <typename T>
struct LayerGeneratorOf {
  DenseOf<T> head;       // L^(n): C_s -> C_e
  T w1, b1, w2, b2;      // C_e -> H -> n_in * n_out
  DenseOf<T> bias_head;  // C_e -> n_out
};

template <typename T>
struct GeneratorOf {
  std::vector<DenseOf<T>> encoder;  // E_share
  std::vector<LayerGeneratorOf<T>> layers;
};

using LayerGeneratorParams = LayerGeneratorOf<Parameter>;
using GeneratorParams = GeneratorOf<Parameter>;
using GeneratorVars = GeneratorOf<Var>;

// Visits every tensor slot of a generator in a fixed order with its
// relative name ("encoder/0/weight", "layer/1/w2", ...).
template <typename G, typename F>
void for_each_tensor(G& gen, F&& f) {
  for (std::size_t k = 0; k < gen.encoder.size(); ++k) {
    f("encoder/" + std::to_string(k) + "/weight", gen.encoder[k].weight);
    f("encoder/" + std::to_string(k) + "/bias", gen.encoder[k].bias);
  }
  for (std::size_t n = 0; n < gen.layers.size(); ++n) {
    auto& l = gen.layers[n];
    const std::string p = "layer/" + std::to_string(n) + "/";
    f(p + "head/weight", l.head.weight);
    f(p + "head/bias", l.head.bias);
    f(p + "w1", l.w1);
    f(p + "b1", l.b1);
    f(p + "w2", l.w2);
    f(p + "b2", l.b2);
    f(p + "bias_head/weight", l.bias_head.weight);
    f(p + "bias_head/bias", l.bias_head.bias);
  }
}

// Rebuilds a generator with every slot mapped through f.
template <typename B, typename G, typename F>
GeneratorOf<B> map_generator(G& gen, F&& f) {
  GeneratorOf<B> out;
  for (auto& d : gen.encoder) out.encoder.push_back({f(d.weight), f(d.bias)});
  for (auto& l : gen.layers) {
    LayerGeneratorOf<B> m{{f(l.head.weight), f(l.head.bias)},
                          f(l.w1), f(l.b1), f(l.w2), f(l.b2),
                          {f(l.bias_head.weight), f(l.bias_head.bias)}};
    out.layers.push_back(std::move(m));
  }
  return out;
}

struct GeneratorDims {
  std::size_t input_dim = 16;   // pooled item-embedding width
  std::size_t shared_dim = 32;  // C_s
  std::size_t layer_dim = 16;   // C_e
  std::size_t hidden_dim = 8;   // generator MLP width
};

GeneratorParams init_generator(const GeneratorDims& dims, const DynamicLayerSpec& target, Rng& rng);

// Target spec recovered from tensor shapes (bias head width and w2 width).
DynamicLayerSpec target_spec(const GeneratorParams& gen);
std::size_t shared_dim(const GeneratorParams& gen);

GeneratorVars bind_trainable(Graph& g, GeneratorParams& gen);
GeneratorVars bind_constant(Graph& g, const GeneratorParams& gen);

// ---------------------------------------------------------------------------
// Graph-level generation.
// ---------------------------------------------------------------------------

// Mean-pooled context embedding (1 x E), canonical item order.
Var pool_session(Graph& g, Var embedding, std::span<const std::uint32_t> items);
// E_share: relu between layers, linear output. Input is the pooled row.
Var shared_encoder(Graph& g, const GeneratorVars& gen, Var pooled);
Var layer_embed(Graph& g, Var shared, const GeneratorVars& gen, std::size_t n);
DenseOf<Var> generate_layer(Graph& g, Var e, const LayerGeneratorOf<Var>& gen, LayerDims dims);
std::vector<DenseOf<Var>> generate_all(Graph& g, Var shared, const GeneratorVars& gen,
                                       const DynamicLayerSpec& spec);

// ---------------------------------------------------------------------------
// Tensor-level wrappers (inference). They run the same graph code, so their
// output is bit-identical to the training path.
// ---------------------------------------------------------------------------

// Throws std::invalid_argument on an empty session.
Tensor encode_session(std::span<const std::uint32_t> items, const Tensor& embedding,
                      const GeneratorParams& gen);

struct LayerEmbedding {
  Tensor e;  // (1, C_e)
};

LayerEmbedding layer_embed(const Tensor& shared, const GeneratorParams& gen, std::size_t n);
DynamicLayer generate_layer(const LayerEmbedding& e, const LayerGeneratorParams& gen, LayerDims dims);

DynamicParams generate_from_shared(const Tensor& shared, const GeneratorParams& gen,
                                   const DynamicLayerSpec& spec);
DynamicParams generate_all(std::span<const std::uint32_t> items, const Tensor& embedding,
                           const GeneratorParams& gen, const DynamicLayerSpec& spec);

// ---------------------------------------------------------------------------
// Modular (blocked) kernel generation for convolution-style layers.
//
// A target kernel of dims (C_in*f_w, C_out*f_h) is an i x j grid of base
// kernels of dims (C'_in*f_w, C'_out*f_h), i = C_in/C'_in, j = C_out/C'_out;
// base block (a, b) occupies rows [a*rb, (a+1)*rb) and cols [b*cb, (b+1)*cb).
// ---------------------------------------------------------------------------

class BlockSpec {
 public:
  // Throws ShapeError unless C_in, C_out are exact multiples of the base
  // channel counts and every count is positive.
  static BlockSpec make(std::size_t c_in, std::size_t c_out, std::size_t base_c_in,
                        std::size_t base_c_out, std::size_t f_w = 1, std::size_t f_h = 1);

  std::size_t grid_rows() const { return c_in_ / base_c_in_; }   // i
  std::size_t grid_cols() const { return c_out_ / base_c_out_; } // j
  Shape target_dims() const { return {c_in_ * f_w_, c_out_ * f_h_}; }
  Shape base_dims() const { return {base_c_in_ * f_w_, base_c_out_ * f_h_}; }

 private:
  std::size_t c_in_ = 0, c_out_ = 0, base_c_in_ = 0, base_c_out_ = 0, f_w_ = 1, f_h_ = 1;
};

using KernelGrid = std::vector<std::vector<Tensor>>;  // [a][b]

Tensor assemble_blocks(const KernelGrid& grid, const BlockSpec& spec);
KernelGrid disassemble_blocks(const Tensor& kernel, const BlockSpec& spec);

// Base-kernel generator g: z' (1 x C_z) -> flattened base kernel.
struct BaseKernelGenerator {
  Tensor weight;  // (C_z, rb*cb)
  Tensor bias;    // (1, rb*cb)
};

// Generates each base block from its latent and assembles the full kernel.
Tensor generate_modular_kernel(const std::vector<std::vector<Tensor>>& latents,
                               const BaseKernelGenerator& gen, const BlockSpec& spec);

}  // namespace duet

#endif  // DUET_PPG_HPP_
