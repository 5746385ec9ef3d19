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

// Double-precision re-derivation of the training loss, written from the
// model description with plain loops. Reads the float parameters of a
// DuetModel but shares no code with the graph.

#ifndef DUET_TESTS_REFERENCE_MODEL_HPP_
#define DUET_TESTS_REFERENCE_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "duet/trainer.hpp"

namespace duet::oracle {

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  explicit Mat(const Tensor& t) : rows(t.rows()), cols(t.cols()), v(t.data().begin(), t.data().end()) {}
  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

inline Mat affine(const Mat& x, const Mat& w, const Mat& b) {
  Mat out(x.rows, w.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < w.cols; ++j) {
      double acc = b.v[j];
      for (std::size_t k = 0; k < x.cols; ++k) acc += x.at(i, k) * w.at(k, j);
      out.at(i, j) = acc;
    }
  return out;
}

inline void relu_in_place(Mat& m) {
  for (double& x : m.v) x = std::max(x, 0.0);
}

inline double bce(double s, double y) {
  return std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::abs(s)));
}

inline std::vector<double> pooled(const Mat& emb, std::span<const std::uint32_t> items) {
  std::vector<double> out(emb.cols, 0.0);
  for (std::uint32_t it : items)
    for (std::size_t c = 0; c < emb.cols; ++c) out[c] += emb.at(it, c);
  for (double& x : out) x /= static_cast<double>(items.size());
  return out;
}

struct RefLayer {
  Mat w, b;
};

struct RefGenerator {
  std::vector<RefLayer> encoder;
  struct Head {
    RefLayer head;
    Mat w1, b1, w2, b2;
    RefLayer bias_head;
  };
  std::vector<Head> layers;
};

inline RefGenerator to_ref(const GeneratorParams& g) {
  RefGenerator r;
  for (const Dense& d : g.encoder) r.encoder.push_back({Mat(d.weight.value), Mat(d.bias.value)});
  for (const LayerGeneratorParams& l : g.layers) {
    r.layers.push_back({{Mat(l.head.weight.value), Mat(l.head.bias.value)},
                        Mat(l.w1.value), Mat(l.b1.value), Mat(l.w2.value), Mat(l.b2.value),
                        {Mat(l.bias_head.weight.value), Mat(l.bias_head.bias.value)}});
  }
  return r;
}

// Similarity-weighted average of the members; weights exposed for tests.
inline RefGenerator fuse(const std::vector<RefGenerator>& members, double tau, std::vector<double>* weights_out = nullptr) {
  const std::size_t m = members.size();
  std::vector<std::vector<double>> rows(m);
  for (std::size_t g = 0; g < m; ++g)
    for (const auto& l : members[g].layers) rows[g].insert(rows[g].end(), l.w1.v.begin(), l.w1.v.end());
  std::vector<double> p(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < rows[i].size(); ++k) p[i] += rows[i][k] * rows[j][k];
  double total = 0.0;
  for (double x : p) total += x;
  std::vector<double> z(m);
  for (std::size_t i = 0; i < m; ++i) z[i] = (total == 0.0 ? 1.0 / static_cast<double>(m) : p[i] / total) / tau;
  const double hi = *std::max_element(z.begin(), z.end());
  double norm = 0.0;
  for (double& x : z) norm += (x = std::exp(x - hi));
  for (double& x : z) x /= norm;
  if (weights_out) *weights_out = z;

  auto blend = [&](auto pick) {
    Mat out = pick(members[0]);
    for (double& x : out.v) x = 0.0;
    for (std::size_t g = 0; g < m; ++g) {
      const Mat& src = pick(members[g]);
      for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += z[g] * src.v[i];
    }
    return out;
  };
  RefGenerator f = members[0];
  for (std::size_t k = 0; k < f.encoder.size(); ++k) {
    f.encoder[k].w = blend([&](const RefGenerator& g) -> const Mat& { return g.encoder[k].w; });
    f.encoder[k].b = blend([&](const RefGenerator& g) -> const Mat& { return g.encoder[k].b; });
  }
  for (std::size_t n = 0; n < f.layers.size(); ++n) {
    auto& l = f.layers[n];
    l.head.w = blend([&](const RefGenerator& g) -> const Mat& { return g.layers[n].head.w; });
    l.head.b = blend([&](const RefGenerator& g) -> const Mat& { return g.layers[n].head.b; });
    l.w1 = blend([&](const RefGenerator& g) -> const Mat& { return g.layers[n].w1; });
    l.b1 = blend([&](const RefGenerator& g) -> const Mat& { return g.layers[n].b1; });
    l.w2 = blend([&](const RefGenerator& g) -> const Mat& { return g.layers[n].w2; });
    l.b2 = blend([&](const RefGenerator& g) -> const Mat& { return g.layers[n].b2; });
    l.bias_head.w = blend([&](const RefGenerator& g) -> const Mat& { return g.layers[n].bias_head.w; });
    l.bias_head.b = blend([&](const RefGenerator& g) -> const Mat& { return g.layers[n].bias_head.b; });
  }
  return f;
}

// Generated head for a context: pooled -> encoder -> per-layer embedding ->
// kernel (e W1 + B1) W2 + B2 reshaped row-major, bias e Wb + bb.
inline std::vector<RefLayer> generate(const RefGenerator& g, const Mat& emb, std::span<const std::uint32_t> context,
                                      const DynamicLayerSpec& spec) {
  Mat x(1, emb.cols);
  x.v = pooled(emb, context);
  for (std::size_t k = 0; k < g.encoder.size(); ++k) {
    x = affine(x, g.encoder[k].w, g.encoder[k].b);
    if (k + 1 < g.encoder.size()) relu_in_place(x);
  }
  std::vector<RefLayer> head;
  for (std::size_t n = 0; n < spec.size(); ++n) {
    const auto& l = g.layers[n];
    const Mat e = affine(x, l.head.w, l.head.b);
    Mat flat = affine(affine(e, l.w1, l.b1), l.w2, l.b2);
    flat.rows = spec[n].n_in;
    flat.cols = spec[n].n_out;
    head.push_back({flat, affine(e, l.bias_head.w, l.bias_head.b)});
  }
  return head;
}

inline std::vector<double> scores(const BackboneParams& bb, std::span<const RefLayer> head, const Session& s) {
  const Mat emb(bb.embedding.value);
  std::vector<std::uint32_t> ctx(s.context.begin(), s.context.end());
  std::sort(ctx.begin(), ctx.end());
  const std::vector<double> pool = pooled(emb, ctx);
  Mat x(s.samples.size(), 2 * emb.cols);
  for (std::size_t r = 0; r < s.samples.size(); ++r)
    for (std::size_t c = 0; c < emb.cols; ++c) {
      x.at(r, c) = pool[c];
      x.at(r, emb.cols + c) = emb.at(s.samples[r].item, c);
    }
  for (const Dense& d : bb.hidden) {
    x = affine(x, Mat(d.weight.value), Mat(d.bias.value));
    relu_in_place(x);
  }
  for (std::size_t n = 0; n < head.size(); ++n) {
    x = affine(x, head[n].w, head[n].b);
    if (n + 1 < head.size()) relu_in_place(x);
  }
  return x.v;
}

inline double umn_loss(const DuetModel& m, const Session& s) {
  std::vector<RefLayer> head;
  for (const Dense& d : m.global_head) head.push_back({Mat(d.weight.value), Mat(d.bias.value)});
  const std::vector<double> sc = scores(m.backbone, head, s);
  double total = 0.0;
  for (std::size_t i = 0; i < sc.size(); ++i) total += bce(sc[i], s.samples[i].label);
  return total / static_cast<double>(sc.size());
}

inline double ppg_loss(const DuetModel& m, const RefGenerator& gen, const Session& s, double gamma) {
  std::vector<std::uint32_t> ctx(s.context.begin(), s.context.end());
  std::sort(ctx.begin(), ctx.end());
  const std::vector<RefLayer> head = generate(gen, Mat(m.backbone.embedding.value), ctx, m.spec);
  const std::vector<double> sc = scores(m.backbone, head, s);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < sc.size(); ++i) {
    const double w = std::pow(gamma, static_cast<double>(s.samples[i].position));
    num += w * bce(sc[i], s.samples[i].label);
    den += w;
  }
  return num / den;
}

// The per-step objective: mean over the batch of (umn + ppg under the
// fused ensemble).
inline double joint_loss(const DuetModel& m, std::span<const Session> batch, double gamma) {
  std::vector<RefGenerator> members;
  for (const GeneratorParams& g : m.generators) members.push_back(to_ref(g));
  const RefGenerator fused = fuse(members, m.tau);
  double total = 0.0;
  for (const Session& s : batch) total += umn_loss(m, s) + ppg_loss(m, fused, s, gamma);
  return total / static_cast<double>(batch.size());
}

}  // namespace duet::oracle

#endif  // DUET_TESTS_REFERENCE_MODEL_HPP_
