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

#include "duet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace duet {

std::string Shape::str() const {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

Tensor::Tensor(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match dims " + Shape{rows, cols}.str());
  }
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0f;
  return t;
}

Tensor Tensor::row(std::initializer_list<float> values) {
  return Tensor(1, values.size(), std::vector<float>(values));
}

float Tensor::item() const {
  if (rows_ != 1 || cols_ != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
  return data_[0];
}

Tensor Tensor::reshaped(std::size_t rows, std::size_t cols) const {
  if (rows * cols != data_.size()) {
    throw ShapeError("cannot reshape " + shape().str() + " to " + Shape{rows, cols}.str());
  }
  return Tensor(rows, cols, data_);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool operator==(const Tensor& a, const Tensor& b) {
  return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dims differ, " + a.shape().str() + " x " + b.shape().str());
  }
  Tensor out(a.rows(), b.cols());
  const std::size_t n = a.cols();
  const std::size_t m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    float* o = &out(i, 0);
    for (std::size_t k = 0; k < n; ++k) {
      const float aik = a(i, k);
      const float* brow = &b.data()[k * m];
      for (std::size_t j = 0; j < m; ++j) o[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_bt: inner dims differ, " + a.shape().str() + " x " +
                     b.shape().str() + "^T");
  }
  Tensor out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
      out(i, j) = acc;
    }
  }
  return out;
}

Tensor matmul_at(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_at: inner dims differ, " + a.shape().str() + "^T x " +
                     b.shape().str());
  }
  Tensor out(a.cols(), b.cols());
  const std::size_t m = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const float* brow = &b.data()[k * m];
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const float aki = a(k, i);
      if (aki == 0.0f) continue;
      float* o = &out(i, 0);
      for (std::size_t j = 0; j < m; ++j) o[j] += aki * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& a, float s) {
  Tensor out = a;
  for (float& v : out.data()) v *= s;
  return out;
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != x.cols()) {
    throw ShapeError("add_row_bias: bias " + b.shape().str() + " does not broadcast over " +
                     x.shape().str());
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[j];
  return out;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_row_bias(matmul(x, w), b);
}

Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

float sigmoid(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = a;
  for (float& v : out.data()) v = sigmoid(v);
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    float mx = a(i, 0);
    for (std::size_t j = 1; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
    float total = 0.0f;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      out(i, j) = std::exp(a(i, j) - mx);
      total += out(i, j);
    }
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) /= total;
  }
  return out;
}

Tensor row_sums(const Tensor& a) {
  Tensor out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    float acc = 0.0f;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j);
    out[i] = acc;
  }
  return out;
}

Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows: empty input " + a.shape().str());
  Tensor out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a(i, j);
  const float inv = 1.0f / static_cast<float>(a.rows());
  for (float& v : out.data()) v *= inv;
  return out;
}

float sum(const Tensor& a) {
  float acc = 0.0f;
  for (float v : a.data()) acc += v;
  return acc;
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rows() != 1 || logits.cols() == 0) {
    throw ShapeError("cross_entropy: logits must be 1xC, got " + logits.shape().str());
  }
  if (label >= logits.cols()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                            " out of range for " + std::to_string(logits.cols()) + " classes");
  }
  float mx = logits[0];
  for (float v : logits.data()) mx = std::max(mx, v);
  float total = 0.0f;
  for (float v : logits.data()) total += std::exp(v - mx);
  return Tensor::scalar(mx + std::log(total) - logits[label]);
}

float sigmoid_cross_entropy(float score, float label) {
  // log(1 + e^s) - y*s, written to stay finite for large |s|.
  const float softplus = std::max(score, 0.0f) + std::log1p(std::exp(-std::fabs(score)));
  return softplus - label * score;
}

}  // namespace duet
