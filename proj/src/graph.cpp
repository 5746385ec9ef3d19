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

#include "duet/graph.hpp"

#include <cmath>

namespace duet {

const Tensor& Graph::val(std::uint32_t id) const {
  const Node& n = nodes_[id];
  if (n.param != nullptr) return n.param->value;
  if (n.external != nullptr) return *n.external;
  return n.value;
}

const Tensor& Graph::value(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("graph: unknown variable");
  return val(v.id);
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.empty() && val(v.id).size() != 0) return Tensor(val(v.id).rows(), val(v.id).cols());
  return n.grad;
}

Var Graph::push(Op op, std::vector<std::uint32_t> inputs, Tensor value) {
  Node n;
  n.op = op;
  for (std::uint32_t in : inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::constant(Tensor value) { return push(Op::kConstant, {}, std::move(value)); }

Var Graph::constant_ref(const Tensor& value) {
  Var v = push(Op::kConstant, {}, Tensor());
  nodes_.back().external = &value;
  return v;
}

Var Graph::param(Parameter& p) {
  Var v = push(Op::kParameter, {}, Tensor());
  nodes_.back().param = &p;
  nodes_.back().requires_grad = true;
  return v;
}

Var Graph::matmul(Var a, Var b) {
  return push(Op::kMatMul, {a.id, b.id}, duet::matmul(value(a), value(b)));
}

Var Graph::add(Var a, Var b) { return push(Op::kAdd, {a.id, b.id}, duet::add(value(a), value(b))); }

Var Graph::sub(Var a, Var b) { return push(Op::kSub, {a.id, b.id}, duet::sub(value(a), value(b))); }

Var Graph::mul(Var a, Var b) {
  return push(Op::kMul, {a.id, b.id}, duet::hadamard(value(a), value(b)));
}

Var Graph::scale(Var a, float s) {
  Var v = push(Op::kScale, {a.id}, duet::scale(value(a), s));
  nodes_.back().scalar = s;
  return v;
}

Var Graph::add_row_bias(Var x, Var b) {
  return push(Op::kAddRowBias, {x.id, b.id}, duet::add_row_bias(value(x), value(b)));
}

Var Graph::relu(Var a) { return push(Op::kRelu, {a.id}, duet::relu(value(a))); }

Var Graph::sigmoid(Var a) { return push(Op::kSigmoid, {a.id}, duet::sigmoid(value(a))); }

Var Graph::sum(Var a) { return push(Op::kSum, {a.id}, Tensor::scalar(duet::sum(value(a)))); }

Var Graph::mean_rows(Var a) { return push(Op::kMeanRows, {a.id}, duet::mean_rows(value(a))); }

Var Graph::row_sums(Var a) { return push(Op::kRowSums, {a.id}, duet::row_sums(value(a))); }

Var Graph::reshape(Var a, std::size_t rows, std::size_t cols) {
  return push(Op::kReshape, {a.id}, value(a).reshaped(rows, cols));
}

Var Graph::transpose(Var a) { return push(Op::kTranspose, {a.id}, duet::transpose(value(a))); }

Var Graph::gather_rows(Var table, std::span<const std::uint32_t> indices) {
  const Tensor& t = value(table);
  Tensor out(indices.size(), t.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= t.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(indices[r]) +
                              " out of range for table " + t.shape().str());
    }
    auto src = t.row_span(indices[r]);
    std::copy(src.begin(), src.end(), &out(r, 0));
  }
  Var v = push(Op::kGatherRows, {table.id}, std::move(out));
  nodes_.back().indices.assign(indices.begin(), indices.end());
  return v;
}

Var Graph::concat_cols(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.rows() != y.rows()) {
    throw ShapeError("concat_cols: row counts differ, " + x.shape().str() + " vs " +
                     y.shape().str());
  }
  Tensor out(x.rows(), x.cols() + y.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j);
    for (std::size_t j = 0; j < y.cols(); ++j) out(i, x.cols() + j) = y(i, j);
  }
  return push(Op::kConcatCols, {a.id, b.id}, std::move(out));
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  std::vector<std::uint32_t> ids;
  for (Var p : parts) {
    if (value(p).cols() != cols) {
      throw ShapeError("concat_rows: column counts differ, " + value(parts[0]).shape().str() +
                       " vs " + value(p).shape().str());
    }
    rows += value(p).rows();
    ids.push_back(p.id);
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    auto src = value(p).data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += src.size();
  }
  return push(Op::kConcatRows, std::move(ids), std::move(out));
}

Var Graph::softmax_rows(Var a) {
  return push(Op::kSoftmaxRows, {a.id}, duet::softmax_rows(value(a)));
}

Var Graph::share_of_total(Var a) {
  const Tensor& x = value(a);
  float total = 0.0f;
  for (float v : x.data()) total += v;
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = total == 0.0f ? 1.0f / static_cast<float>(y.size()) : x[i] / total;
  }
  Var v = push(Op::kShareOfTotal, {a.id}, std::move(y));
  nodes_.back().scalar = total;
  return v;
}

Var Graph::blend(Var weights, std::span<const Var> parts) {
  const Tensor& w = value(weights);
  if (parts.empty() || w.size() != parts.size() || (w.rows() != 1 && w.cols() != 1)) {
    throw ShapeError("blend: weight vector " + w.shape().str() + " does not match " +
                     std::to_string(parts.size()) + " parts");
  }
  const Shape shape = value(parts[0]).shape();
  std::vector<std::uint32_t> ids{weights.id};
  for (Var p : parts) {
    if (value(p).shape() != shape) {
      throw ShapeError("blend: part shapes differ, " + shape.str() + " vs " +
                       value(p).shape().str());
    }
    ids.push_back(p.id);
  }
  Tensor out = duet::scale(value(parts[0]), w[0]);
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const Tensor& p = value(parts[i]);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w[i] * p[k];
  }
  return push(Op::kBlend, std::move(ids), std::move(out));
}

Var Graph::cross_entropy(Var logits, std::size_t label) {
  Var v = push(Op::kCrossEntropy, {logits.id}, duet::cross_entropy(value(logits), label));
  nodes_.back().indices = {static_cast<std::uint32_t>(label)};
  return v;
}

Var Graph::sigmoid_cross_entropy(Var scores, std::span<const float> labels,
                                 std::span<const float> weights) {
  const Tensor& s = value(scores);
  if (s.cols() != 1 || s.rows() != labels.size() || labels.size() != weights.size() ||
      labels.empty()) {
    throw ShapeError("sigmoid_cross_entropy: scores " + s.shape().str() + " vs " +
                     std::to_string(labels.size()) + " labels and " +
                     std::to_string(weights.size()) + " weights");
  }
  float numer = 0.0f;
  float denom = 0.0f;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    numer += weights[i] * duet::sigmoid_cross_entropy(s[i], labels[i]);
    denom += weights[i];
  }
  if (!(denom > 0.0f)) throw std::invalid_argument("sigmoid_cross_entropy: weights sum to zero");
  Var v = push(Op::kSigmoidCrossEntropy, {scores.id}, Tensor::scalar(numer / denom));
  nodes_.back().aux.assign(labels.begin(), labels.end());
  nodes_.back().aux2.assign(weights.begin(), weights.end());
  nodes_.back().scalar = denom;
  return v;
}

void Graph::accumulate(std::uint32_t id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }
}

void Graph::backward(Var loss) {
  const Tensor& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + lv.shape().str());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  nodes_[loss.id].grad = Tensor::scalar(1.0f);

  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    const Tensor g = n.grad;
    const auto& in = n.inputs;
    switch (n.op) {
      case Op::kConstant:
        break;
      case Op::kParameter: {
        Tensor& pg = n.param->grad;
        if (pg.shape() != g.shape()) pg = Tensor(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        break;
      }
      case Op::kMatMul:
        if (nodes_[in[0]].requires_grad) accumulate(in[0], matmul_bt(g, val(in[1])));
        if (nodes_[in[1]].requires_grad) accumulate(in[1], matmul_at(val(in[0]), g));
        break;
      case Op::kAdd:
        accumulate(in[0], g);
        accumulate(in[1], g);
        break;
      case Op::kSub:
        accumulate(in[0], g);
        accumulate(in[1], duet::scale(g, -1.0f));
        break;
      case Op::kMul:
        accumulate(in[0], hadamard(g, val(in[1])));
        accumulate(in[1], hadamard(g, val(in[0])));
        break;
      case Op::kScale:
        accumulate(in[0], duet::scale(g, n.scalar));
        break;
      case Op::kAddRowBias: {
        accumulate(in[0], g);
        if (nodes_[in[1]].requires_grad) {
          Tensor gb(1, g.cols());
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
          accumulate(in[1], gb);
        }
        break;
      }
      case Op::kRelu: {
        const Tensor& x = val(in[0]);
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i)
          if (!(x[i] > 0.0f)) gx[i] = 0.0f;
        accumulate(in[0], gx);
        break;
      }
      case Op::kSigmoid: {
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= n.value[i] * (1.0f - n.value[i]);
        accumulate(in[0], gx);
        break;
      }
      case Op::kSum: {
        const Tensor& x = val(in[0]);
        accumulate(in[0], Tensor(x.rows(), x.cols(), g[0]));
        break;
      }
      case Op::kMeanRows: {
        const Tensor& x = val(in[0]);
        const float inv = 1.0f / static_cast<float>(x.rows());
        Tensor gx(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i)
          for (std::size_t j = 0; j < x.cols(); ++j) gx(i, j) = g[j] * inv;
        accumulate(in[0], gx);
        break;
      }
      case Op::kRowSums: {
        const Tensor& x = val(in[0]);
        Tensor gx(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i)
          for (std::size_t j = 0; j < x.cols(); ++j) gx(i, j) = g[i];
        accumulate(in[0], gx);
        break;
      }
      case Op::kReshape: {
        const Tensor& x = val(in[0]);
        accumulate(in[0], g.reshaped(x.rows(), x.cols()));
        break;
      }
      case Op::kTranspose:
        accumulate(in[0], duet::transpose(g));
        break;
      case Op::kGatherRows: {
        const Tensor& t = val(in[0]);
        Tensor gt(t.rows(), t.cols());
        for (std::size_t r = 0; r < n.indices.size(); ++r)
          for (std::size_t j = 0; j < t.cols(); ++j) gt(n.indices[r], j) += g(r, j);
        accumulate(in[0], gt);
        break;
      }
      case Op::kConcatCols: {
        const Tensor& x = val(in[0]);
        const Tensor& y = val(in[1]);
        Tensor gx(x.rows(), x.cols());
        Tensor gy(y.rows(), y.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < x.cols(); ++j) gx(i, j) = g(i, j);
          for (std::size_t j = 0; j < y.cols(); ++j) gy(i, j) = g(i, x.cols() + j);
        }
        accumulate(in[0], gx);
        accumulate(in[1], gy);
        break;
      }
      case Op::kConcatRows: {
        std::size_t offset = 0;
        for (std::uint32_t part : in) {
          const Tensor& x = val(part);
          std::vector<float> slice(g.data().begin() + static_cast<std::ptrdiff_t>(offset),
                                   g.data().begin() + static_cast<std::ptrdiff_t>(offset + x.size()));
          offset += x.size();
          accumulate(part, Tensor(x.rows(), x.cols(), std::move(slice)));
        }
        break;
      }
      case Op::kSoftmaxRows: {
        const Tensor& y = n.value;
        Tensor gx(y.rows(), y.cols());
        for (std::size_t i = 0; i < y.rows(); ++i) {
          float dot = 0.0f;
          for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
          for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) = y(i, j) * (g(i, j) - dot);
        }
        accumulate(in[0], gx);
        break;
      }
      case Op::kShareOfTotal: {
        if (n.scalar == 0.0f) break;
        const Tensor& y = n.value;
        float dot = 0.0f;
        for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
        Tensor gx(y.rows(), y.cols());
        for (std::size_t i = 0; i < y.size(); ++i) gx[i] = (g[i] - dot) / n.scalar;
        accumulate(in[0], gx);
        break;
      }
      case Op::kBlend: {
        const Tensor& w = val(in[0]);
        Tensor gw(w.rows(), w.cols());
        for (std::size_t i = 1; i < in.size(); ++i) {
          const Tensor& p = val(in[i]);
          float dot = 0.0f;
          for (std::size_t k = 0; k < p.size(); ++k) dot += g[k] * p[k];
          gw[i - 1] = dot;
          if (nodes_[in[i]].requires_grad) accumulate(in[i], duet::scale(g, w[i - 1]));
        }
        accumulate(in[0], gw);
        break;
      }
      case Op::kCrossEntropy: {
        Tensor gx = duet::softmax_rows(val(in[0]));
        gx[n.indices[0]] -= 1.0f;
        accumulate(in[0], duet::scale(gx, g[0]));
        break;
      }
      case Op::kSigmoidCrossEntropy: {
        const Tensor& s = val(in[0]);
        Tensor gs(s.rows(), 1);
        for (std::size_t i = 0; i < s.rows(); ++i)
          gs[i] = g[0] * n.aux2[i] * (duet::sigmoid(s[i]) - n.aux[i]) / n.scalar;
        accumulate(in[0], gs);
        break;
      }
    }
  }
}

}  // namespace duet
