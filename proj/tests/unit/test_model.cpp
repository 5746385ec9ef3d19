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
#include <cstdint>
#include <memory>
#include <vector>

#include "catch_amalgamated.hpp"
#include "duet/config.hpp"
#include "duet/model.hpp"
#include "reference_model.hpp"

using namespace duet;
using Catch::Matchers::WithinAbs;

namespace {

ModelDims small_dims() {
  ModelDims d;
  d.num_items = 20;
  d.embed_dim = 4;
  d.hidden_dim = 8;
  return d;
}

PrimaryModel make_model(std::uint64_t seed, BackboneParams* keep = nullptr) {
  Rng rng(seed);
  const ModelDims dims = small_dims();
  BackboneParams bb = BackboneParams::init(dims, rng);
  if (keep) *keep = bb;
  const DynamicLayerSpec spec = dims.classifier_spec();
  DynamicParams head = to_dynamic_params(init_dense_chain(spec, rng), Provenance::kTrainedGlobal);
  auto split = split_static_dynamic(std::move(bb), spec);
  return PrimaryModel(split.backbone, split.spec, std::move(head));
}

}  // namespace

TEST_CASE("zero weights give relu of the biases as features") {
  Rng rng(1);
  BackboneParams bb = BackboneParams::init(small_dims(), rng);
  for (Dense& d : bb.hidden) d.weight.value.fill(0.0f);
  bb.hidden[0].bias.value = Tensor(1, 8, 0.0f);
  bb.hidden[1].bias.value = Tensor(1, 8, 0.0f);
  bb.hidden[1].bias.value[3] = 0.75f;
  bb.hidden[1].bias.value[5] = -0.5f;
  Graph g;
  const std::uint32_t ctx[] = {1, 2};
  const std::uint32_t cands[] = {3, 4, 5};
  const Tensor f = g.value(backbone_forward(g, bind_constant(g, bb), ctx, cands));
  REQUIRE(f.shape() == Shape{3, 8});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 8; ++c) CHECK(f(r, c) == (c == 3 ? 0.75f : 0.0f));
}

TEST_CASE("one candidate equals its row of the batched call") {
  const PrimaryModel m = make_model(2);
  const std::uint32_t ctx[] = {7, 1, 9};
  const std::uint32_t cands[] = {0, 5, 11, 19};
  const Tensor batch = m.backbone_forward(ctx, cands);
  for (std::size_t r = 0; r < 4; ++r) {
    const Tensor one = m.backbone_forward(ctx, std::span<const std::uint32_t>(&cands[r], 1));
    for (std::size_t c = 0; c < batch.cols(); ++c) CHECK(one(0, c) == batch(r, c));
  }
}

TEST_CASE("features do not depend on context order") {
  const PrimaryModel m = make_model(3);
  std::vector<std::uint32_t> ctx{4, 17, 2};
  const std::uint32_t cands[] = {6, 8};
  const Tensor ref = m.backbone_forward(ctx, cands);
  std::sort(ctx.begin(), ctx.end());
  do {
    CHECK(bit_equal(m.backbone_forward(ctx, cands), ref));
  } while (std::next_permutation(ctx.begin(), ctx.end()));
}

TEST_CASE("backbone features match the double-precision forward") {
  BackboneParams bb;
  const PrimaryModel m = make_model(4, &bb);
  Session s;
  s.context = {3, 12, 8, 8};
  for (std::uint32_t c : {0u, 10u, 19u}) s.samples.push_back({c, 1.0f, 0});
  const Tensor f = m.backbone_forward(s.context, std::vector<std::uint32_t>{0, 10, 19});
  const std::vector<double> ref = oracle::scores(bb, {}, s);
  REQUIRE(ref.size() == f.size());
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK_THAT(f[i], WithinAbs(ref[i], 1e-5));
}

TEST_CASE("backbone golden features for a fixed seed") {
  const PrimaryModel m = make_model(5);
  const std::uint32_t ctx[] = {2, 3, 5, 7};
  const std::uint32_t cand[] = {11};
  const Tensor f = m.backbone_forward(ctx, cand);
  // Recorded from this implementation; guards against silent changes to
  // initialisation, pooling or layer order.
  const float golden[] = {0.000000f, 0.000000f, 0.000000f, 0.020573f,
                          0.708767f, 0.000000f, 0.000000f, 0.068062f};
  for (std::size_t c = 0; c < 8; ++c) CHECK_THAT(f[c], WithinAbs(golden[c], 1e-5));
}

TEST_CASE("backbone rejects empty inputs and unknown items") {
  const PrimaryModel m = make_model(6);
  const std::uint32_t some[] = {1};
  const std::uint32_t bad[] = {20};
  CHECK_THROWS_AS(m.backbone_forward({}, some), std::invalid_argument);
  CHECK_THROWS_AS(m.backbone_forward(some, {}), std::invalid_argument);
  CHECK_THROWS_AS(m.backbone_forward(some, bad), std::out_of_range);
}

TEST_CASE("identity classifier returns the features") {
  Rng rng(7);
  const Tensor x = rng.uniform_tensor(5, 4, 2.0f);
  DynamicParams p;
  p.layers.push_back({Tensor::identity(4), Tensor(1, 4)});
  CHECK(bit_equal(PrimaryModel::classifier_forward(x, p), x));
}

TEST_CASE("all-zero classifier scores every row with the same value") {
  Rng rng(8);
  const Tensor x = rng.uniform_tensor(6, 8, 2.0f);
  DynamicParams p;
  p.layers.push_back({Tensor(8, 4), Tensor(1, 4)});
  p.layers.push_back({Tensor(4, 1), Tensor::scalar(0.3f)});
  const Tensor s = PrimaryModel::classifier_forward(x, p);
  for (float v : s.data()) CHECK(v == 0.3f);
}

TEST_CASE("classifier equals a manual affine chain") {
  Rng rng(9);
  const Tensor x = rng.uniform_tensor(6, 8, 1.0f);
  DynamicParams p;
  p.layers.push_back({rng.uniform_tensor(8, 4, 1.0f), rng.uniform_tensor(1, 4, 0.5f)});
  p.layers.push_back({rng.uniform_tensor(4, 1, 1.0f), rng.uniform_tensor(1, 1, 0.5f)});
  using oracle::Mat;
  Mat h = oracle::affine(Mat(x), Mat(p.layers[0].kernel), Mat(p.layers[0].bias));
  oracle::relu_in_place(h);
  const Mat out = oracle::affine(h, Mat(p.layers[1].kernel), Mat(p.layers[1].bias));
  const Tensor s = PrimaryModel::classifier_forward(x, p);
  for (std::size_t i = 0; i < 6; ++i) CHECK_THAT(s[i], WithinAbs(out.v[i], 1e-5));
}

TEST_CASE("classifier spec chains hidden to half to one") {
  const DynamicLayerSpec spec = small_dims().classifier_spec();
  REQUIRE(spec.size() == 2);
  CHECK(spec[0] == LayerDims{8, 4});
  CHECK(spec[1] == LayerDims{4, 1});
  CHECK(spec[0].n_out == spec[1].n_in);

  const Config cfg = parse_config("hidden_dim = 24\nembed_dim = 6\n");
  const DynamicLayerSpec from_cfg = cfg.train_config().model.classifier_spec();
  CHECK(from_cfg[0] == LayerDims{24, 12});
  CHECK(from_cfg[1] == LayerDims{12, 1});
}

TEST_CASE("layer spec validation") {
  CHECK_THROWS_AS(DynamicLayerSpec(std::vector<LayerDims>{}), ShapeError);
  CHECK_THROWS_AS(DynamicLayerSpec(std::vector<LayerDims>{{4, 3}, {2, 1}}), ShapeError);
  CHECK_THROWS_AS(DynamicLayerSpec(std::vector<LayerDims>{{0, 3}}), ShapeError);
  const std::uint32_t widths[] = {32, 16, 1};
  const DynamicLayerSpec s = DynamicLayerSpec::chain(widths);
  CHECK(s.input_width() == 32);
  CHECK(s.output_width() == 1);
}

TEST_CASE("split keeps the backbone bytes through an install") {
  Rng rng(10);
  BackboneParams bb = BackboneParams::init(small_dims(), rng);
  const BackboneParams copy = bb;
  const DynamicLayerSpec spec = small_dims().classifier_spec();
  auto split = split_static_dynamic(std::move(bb), spec);
  CHECK(split.backbone->frozen);
  PrimaryModel m(split.backbone, split.spec, to_dynamic_params(init_dense_chain(spec, rng), Provenance::kTrainedGlobal));
  m.install_dynamic_params(to_dynamic_params(init_dense_chain(spec, rng), Provenance::kGenerated));
  CHECK(bit_equal(m.backbone().embedding.value, copy.embedding.value));
  for (std::size_t k = 0; k < copy.hidden.size(); ++k) {
    CHECK(bit_equal(m.backbone().hidden[k].weight.value, copy.hidden[k].weight.value));
    CHECK(bit_equal(m.backbone().hidden[k].bias.value, copy.hidden[k].bias.value));
  }
  const std::uint32_t w[] = {5, 3};
  CHECK_THROWS_AS(split_static_dynamic(copy, DynamicLayerSpec::chain(w)), ShapeError);
}

TEST_CASE("install round trip and sensitivity") {
  PrimaryModel m = make_model(11);
  Rng rng(12);
  const DynamicLayerSpec spec = m.spec();
  const DynamicParams a = to_dynamic_params(init_dense_chain(spec, rng), Provenance::kGenerated);
  const DynamicParams b = to_dynamic_params(init_dense_chain(spec, rng), Provenance::kGenerated);
  const std::uint32_t ctx[] = {1, 2, 3};
  const std::uint32_t cands[] = {4, 5, 6, 7};

  m.install_dynamic_params(a);
  CHECK(bit_equal(m.dynamic_params(), a));
  const Tensor sa = m.score(ctx, cands);
  CHECK(bit_equal(sa, PrimaryModel::classifier_forward(m.backbone_forward(ctx, cands), a)));

  m.install_dynamic_params(b);
  const Tensor sb = m.score(ctx, cands);
  CHECK_FALSE(bit_equal(sa, sb));
  CHECK(bit_equal(sb, PrimaryModel::classifier_forward(m.backbone_forward(ctx, cands), b)));
}

TEST_CASE("a mis-shaped install is rejected and leaves the model as it was") {
  PrimaryModel m = make_model(13);
  const DynamicParams before = m.dynamic_params();
  DynamicParams bad = before;
  bad.layers[1].kernel = Tensor(3, 1);
  CHECK_THROWS_AS(m.install_dynamic_params(bad), ShapeError);
  DynamicParams short_params = before;
  short_params.layers.pop_back();
  CHECK_THROWS_AS(m.install_dynamic_params(short_params), ShapeError);
  CHECK(bit_equal(m.dynamic_params(), before));
}

TEST_CASE("provenance names") {
  CHECK(std::string(to_string(Provenance::kTrainedGlobal)) == "trained-global");
  CHECK(std::string(to_string(Provenance::kGenerated)) == "generated");
  CHECK(std::string(to_string(Provenance::kFineTuned)) == "fine-tuned");
}
