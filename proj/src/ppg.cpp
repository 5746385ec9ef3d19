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

#include "duet/ppg.hpp"

#include <cmath>

namespace duet {

namespace {

float xavier(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
}

DenseOf<Parameter> dense(std::size_t n_in, std::size_t n_out, float limit, Rng& rng) {
  return {Parameter(rng.uniform_tensor(n_in, n_out, limit)), Parameter(Tensor(1, n_out))};
}

}  // namespace

GeneratorParams init_generator(const GeneratorDims& dims, const DynamicLayerSpec& target, Rng& rng) {
  if (dims.input_dim == 0 || dims.shared_dim == 0 || dims.layer_dim == 0 || dims.hidden_dim == 0) {
    throw ShapeError("generator: all widths must be positive");
  }
  GeneratorParams gen;
  gen.encoder.push_back(dense(dims.input_dim, dims.shared_dim, xavier(dims.input_dim, dims.shared_dim), rng));
  gen.encoder.push_back(dense(dims.shared_dim, dims.shared_dim, xavier(dims.shared_dim, dims.shared_dim), rng));
  for (const LayerDims& d : target.layers()) {
    const std::size_t flat = static_cast<std::size_t>(d.n_in) * d.n_out;
    LayerGeneratorParams l;
    l.head = dense(dims.shared_dim, dims.layer_dim, xavier(dims.shared_dim, dims.layer_dim), rng);
    l.w1 = Parameter(rng.uniform_tensor(dims.layer_dim, dims.hidden_dim,
                                        xavier(dims.layer_dim, dims.hidden_dim)));
    l.b1 = Parameter(Tensor(1, dims.hidden_dim));
    l.w2 = Parameter(rng.uniform_tensor(dims.hidden_dim, flat, xavier(dims.hidden_dim, flat)));
    // The resting output B2 starts as an ordinary Xavier-initialised layer.
    l.b2 = Parameter(rng.uniform_tensor(1, flat, xavier(d.n_in, d.n_out)));
    l.bias_head = dense(dims.layer_dim, d.n_out, 0.1f * xavier(dims.layer_dim, d.n_out), rng);
    gen.layers.push_back(std::move(l));
  }
  return gen;
}

DynamicLayerSpec target_spec(const GeneratorParams& gen) {
  std::vector<LayerDims> layers;
  for (const LayerGeneratorParams& l : gen.layers) {
    const std::size_t n_out = l.bias_head.weight.value.cols();
    const std::size_t flat = l.w2.value.cols();
    if (n_out == 0 || flat % n_out != 0) {
      throw ShapeError("generator: w2 width " + std::to_string(flat) +
                       " is not a multiple of the bias width " + std::to_string(n_out));
    }
    layers.push_back({static_cast<std::uint32_t>(flat / n_out), static_cast<std::uint32_t>(n_out)});
  }
  return DynamicLayerSpec(std::move(layers));
}

std::size_t shared_dim(const GeneratorParams& gen) {
  return gen.encoder.empty() ? 0 : gen.encoder.back().weight.value.cols();
}

GeneratorVars bind_trainable(Graph& g, GeneratorParams& gen) {
  return map_generator<Var>(gen, [&](Parameter& p) { return g.param(p); });
}

GeneratorVars bind_constant(Graph& g, const GeneratorParams& gen) {
  return map_generator<Var>(gen, [&](const Parameter& p) { return g.constant_ref(p.value); });
}

Var pool_session(Graph& g, Var embedding, std::span<const std::uint32_t> items) {
  if (items.empty()) throw std::invalid_argument("encode_session: empty session");
  const std::vector<std::uint32_t> ordered = canonical_order(items);
  return g.mean_rows(g.gather_rows(embedding, ordered));
}

Var shared_encoder(Graph& g, const GeneratorVars& gen, Var pooled) {
  Var x = pooled;
  for (std::size_t k = 0; k < gen.encoder.size(); ++k) {
    x = g.affine(x, gen.encoder[k].weight, gen.encoder[k].bias);
    if (k + 1 < gen.encoder.size()) x = g.relu(x);
  }
  return x;
}

Var layer_embed(Graph& g, Var shared, const GeneratorVars& gen, std::size_t n) {
  if (n >= gen.layers.size()) {
    throw std::out_of_range("layer_embed: layer " + std::to_string(n) + " of " +
                            std::to_string(gen.layers.size()));
  }
  return g.affine(shared, gen.layers[n].head.weight, gen.layers[n].head.bias);
}

DenseOf<Var> generate_layer(Graph& g, Var e, const LayerGeneratorOf<Var>& gen, LayerDims dims) {
  const std::size_t flat = g.value(gen.w2).cols();
  if (flat != static_cast<std::size_t>(dims.n_in) * dims.n_out) {
    throw ShapeError("generate_layer: generator emits " + std::to_string(flat) +
                     " values, layer needs " + Shape{dims.n_in, dims.n_out}.str());
  }
  Var w = g.affine(g.affine(e, gen.w1, gen.b1), gen.w2, gen.b2);
  Var kernel = g.reshape(w, dims.n_in, dims.n_out);
  Var bias = g.affine(e, gen.bias_head.weight, gen.bias_head.bias);
  return {kernel, bias};
}

std::vector<DenseOf<Var>> generate_all(Graph& g, Var shared, const GeneratorVars& gen,
                                       const DynamicLayerSpec& spec) {
  if (gen.layers.size() != spec.size()) {
    throw ShapeError("generate_all: generator has " + std::to_string(gen.layers.size()) +
                     " layer heads, spec has " + std::to_string(spec.size()) + " layers");
  }
  std::vector<DenseOf<Var>> out;
  for (std::size_t n = 0; n < spec.size(); ++n) {
    out.push_back(generate_layer(g, layer_embed(g, shared, gen, n), gen.layers[n], spec[n]));
  }
  return out;
}

Tensor encode_session(std::span<const std::uint32_t> items, const Tensor& embedding,
                      const GeneratorParams& gen) {
  Graph g;
  GeneratorVars v = bind_constant(g, gen);
  return g.value(shared_encoder(g, v, pool_session(g, g.constant_ref(embedding), items)));
}

LayerEmbedding layer_embed(const Tensor& shared, const GeneratorParams& gen, std::size_t n) {
  Graph g;
  GeneratorVars v = bind_constant(g, gen);
  return {g.value(layer_embed(g, g.constant_ref(shared), v, n))};
}

DynamicLayer generate_layer(const LayerEmbedding& e, const LayerGeneratorParams& gen, LayerDims dims) {
  Graph g;
  LayerGeneratorOf<Var> v{{g.constant_ref(gen.head.weight.value), g.constant_ref(gen.head.bias.value)},
                          g.constant_ref(gen.w1.value), g.constant_ref(gen.b1.value),
                          g.constant_ref(gen.w2.value), g.constant_ref(gen.b2.value),
                          {g.constant_ref(gen.bias_head.weight.value),
                           g.constant_ref(gen.bias_head.bias.value)}};
  DenseOf<Var> out = generate_layer(g, g.constant_ref(e.e), v, dims);
  return {g.value(out.weight), g.value(out.bias)};
}

DynamicParams generate_from_shared(const Tensor& shared, const GeneratorParams& gen,
                                   const DynamicLayerSpec& spec) {
  Graph g;
  GeneratorVars v = bind_constant(g, gen);
  DynamicParams p;
  p.provenance = Provenance::kGenerated;
  for (const DenseOf<Var>& l : generate_all(g, g.constant_ref(shared), v, spec)) {
    p.layers.push_back({g.value(l.weight), g.value(l.bias)});
  }
  return p;
}

DynamicParams generate_all(std::span<const std::uint32_t> items, const Tensor& embedding,
                           const GeneratorParams& gen, const DynamicLayerSpec& spec) {
  Graph g;
  GeneratorVars v = bind_constant(g, gen);
  Var shared = shared_encoder(g, v, pool_session(g, g.constant_ref(embedding), items));
  DynamicParams p;
  p.provenance = Provenance::kGenerated;
  for (const DenseOf<Var>& l : generate_all(g, shared, v, spec)) {
    p.layers.push_back({g.value(l.weight), g.value(l.bias)});
  }
  return p;
}

BlockSpec BlockSpec::make(std::size_t c_in, std::size_t c_out, std::size_t base_c_in,
                          std::size_t base_c_out, std::size_t f_w, std::size_t f_h) {
  if (c_in == 0 || c_out == 0 || base_c_in == 0 || base_c_out == 0 || f_w == 0 || f_h == 0) {
    throw ShapeError("block spec: all channel and filter counts must be positive");
  }
  if (c_in % base_c_in != 0 || c_out % base_c_out != 0) {
    throw ShapeError("block spec: C_in=" + std::to_string(c_in) + ", C_out=" + std::to_string(c_out) +
                     " are not integer multiples of C'_in=" + std::to_string(base_c_in) +
                     ", C'_out=" + std::to_string(base_c_out));
  }
  BlockSpec s;
  s.c_in_ = c_in;
  s.c_out_ = c_out;
  s.base_c_in_ = base_c_in;
  s.base_c_out_ = base_c_out;
  s.f_w_ = f_w;
  s.f_h_ = f_h;
  return s;
}

Tensor assemble_blocks(const KernelGrid& grid, const BlockSpec& spec) {
  const Shape base = spec.base_dims();
  if (grid.size() != spec.grid_rows()) {
    throw ShapeError("assemble_blocks: grid has " + std::to_string(grid.size()) + " rows, spec needs " +
                     std::to_string(spec.grid_rows()));
  }
  const Shape target = spec.target_dims();
  Tensor out(target.rows, target.cols);
  for (std::size_t a = 0; a < grid.size(); ++a) {
    if (grid[a].size() != spec.grid_cols()) {
      throw ShapeError("assemble_blocks: grid row " + std::to_string(a) + " has " +
                       std::to_string(grid[a].size()) + " blocks, spec needs " +
                       std::to_string(spec.grid_cols()));
    }
    for (std::size_t b = 0; b < grid[a].size(); ++b) {
      const Tensor& block = grid[a][b];
      if (block.shape() != base) {
        throw ShapeError("assemble_blocks: block (" + std::to_string(a) + "," + std::to_string(b) +
                         ") is " + block.shape().str() + ", expected " + base.str());
      }
      for (std::size_t r = 0; r < base.rows; ++r)
        for (std::size_t c = 0; c < base.cols; ++c) out(a * base.rows + r, b * base.cols + c) = block(r, c);
    }
  }
  return out;
}

KernelGrid disassemble_blocks(const Tensor& kernel, const BlockSpec& spec) {
  if (kernel.shape() != spec.target_dims()) {
    throw ShapeError("disassemble_blocks: kernel " + kernel.shape().str() + " vs spec " +
                     spec.target_dims().str());
  }
  const Shape base = spec.base_dims();
  KernelGrid grid(spec.grid_rows(), std::vector<Tensor>(spec.grid_cols()));
  for (std::size_t a = 0; a < spec.grid_rows(); ++a) {
    for (std::size_t b = 0; b < spec.grid_cols(); ++b) {
      Tensor block(base.rows, base.cols);
      for (std::size_t r = 0; r < base.rows; ++r)
        for (std::size_t c = 0; c < base.cols; ++c) block(r, c) = kernel(a * base.rows + r, b * base.cols + c);
      grid[a][b] = std::move(block);
    }
  }
  return grid;
}

Tensor generate_modular_kernel(const std::vector<std::vector<Tensor>>& latents,
                               const BaseKernelGenerator& gen, const BlockSpec& spec) {
  const Shape base = spec.base_dims();
  if (gen.weight.cols() != base.size()) {
    throw ShapeError("modular generator emits " + std::to_string(gen.weight.cols()) +
                     " values per block, base kernel needs " + base.str());
  }
  KernelGrid grid(latents.size());
  for (std::size_t a = 0; a < latents.size(); ++a) {
    for (const Tensor& z : latents[a]) {
      grid[a].push_back(affine(z, gen.weight, gen.bias).reshaped(base.rows, base.cols));
    }
  }
  return assemble_blocks(grid, spec);
}

}  // namespace duet
