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

#ifndef DUET_GRAPH_HPP_
#define DUET_GRAPH_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "duet/tensor.hpp"

namespace duet {

// A trainable tensor and its gradient slot. The grad buffer always has the
// value's dims; Graph::backward accumulates into it.
struct Parameter {
  Tensor value;
  Tensor grad;

  Parameter() = default;
  explicit Parameter(Tensor v) : value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Tensor(value.rows(), value.cols()); }
};

// Handle to a node in a Graph. Only meaningful for the graph that made it.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

// Reverse-mode tape. Nodes are appended in construction order, so inputs
// always precede their consumers and backward() is a single reverse sweep.
//
// Leaves are either constants (no gradient) or bound Parameters; backward()
// adds d(loss)/d(param) into Parameter::grad for every bound parameter the
// loss depends on. Forward values are never modified by backward().
class Graph {
 public:
  enum class Op : std::uint8_t {
    kConstant,
    kParameter,
    kMatMul,
    kAdd,
    kSub,
    kMul,
    kScale,
    kAddRowBias,
    kRelu,
    kSigmoid,
    kSum,
    kMeanRows,
    kRowSums,
    kReshape,
    kTranspose,
    kGatherRows,
    kConcatCols,
    kConcatRows,
    kSoftmaxRows,
    kShareOfTotal,
    kBlend,
    kCrossEntropy,
    kSigmoidCrossEntropy,
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Copies the tensor into the tape.
  Var constant(Tensor value);
  // References a tensor owned elsewhere; it must outlive the graph.
  Var constant_ref(const Tensor& value);
  // Binds a parameter. Its value is read in place; it must outlive the graph.
  Var param(Parameter& p);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, float s);
  Var add_row_bias(Var x, Var b);
  Var affine(Var x, Var w, Var b) { return add_row_bias(matmul(x, w), b); }
  Var relu(Var a);
  Var sigmoid(Var a);
  Var sum(Var a);
  Var mean_rows(Var a);
  Var row_sums(Var a);
  Var reshape(Var a, std::size_t rows, std::size_t cols);
  Var transpose(Var a);
  // Rows of `table` selected by index, in the given order.
  Var gather_rows(Var table, std::span<const std::uint32_t> indices);
  Var concat_cols(Var a, Var b);
  Var concat_rows(std::span<const Var> parts);
  Var softmax_rows(Var a);
  // a / sum(a); all entries 1/n when the sum is zero (no gradient then).
  Var share_of_total(Var a);
  // sum_i weights[i] * parts[i]; weights is a 1xm or mx1 tensor, parts share dims.
  Var blend(Var weights, std::span<const Var> parts);
  // -log softmax(logits)[label] for 1xC logits.
  Var cross_entropy(Var logits, std::size_t label);
  // sum_i w_i * bce(scores_i, labels_i) / sum_i w_i over an Nx1 score column.
  Var sigmoid_cross_entropy(Var scores, std::span<const float> labels,
                            std::span<const float> weights);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() target w.r.t. v; zeros if v did not
  // contribute.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  Op op(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const { return nodes_.size(); }

  // loss must be 1x1.
  void backward(Var loss);

 private:
  struct Node {
    Op op;
    std::vector<std::uint32_t> inputs;
    Tensor value;
    const Tensor* external = nullptr;
    Parameter* param = nullptr;
    Tensor grad;
    bool requires_grad = false;
    float scalar = 0.0f;
    std::vector<std::uint32_t> indices;
    std::vector<float> aux;
    std::vector<float> aux2;
  };

  const Tensor& val(std::uint32_t id) const;
  Var push(Op op, std::vector<std::uint32_t> inputs, Tensor value);
  void accumulate(std::uint32_t id, const Tensor& g);

  std::vector<Node> nodes_;
};

}  // namespace duet

#endif  // DUET_GRAPH_HPP_
