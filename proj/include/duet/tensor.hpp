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

#ifndef DUET_TENSOR_HPP_
#define DUET_TENSOR_HPP_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace duet {

// Raised for any operand-shape violation. The message names the offending dims.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  std::string str() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Dense row-major float matrix. Rank <= 2; a row vector is 1xN, a scalar 1x1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, float fill = 0.0f);
  Tensor(std::size_t rows, std::size_t cols, std::vector<float> data);

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }
  static Tensor identity(std::size_t n);
  static Tensor row(std::initializer_list<float> values);
  static Tensor scalar(float v) { return Tensor(1, 1, v); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  Shape shape() const { return {rows_, cols_}; }
  bool empty() const { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Only valid for 1x1 tensors.
  float item() const;

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::span<const float> row_span(std::size_t r) const {
    return std::span<const float>(data_).subspan(r * cols_, cols_);
  }

  // Same data, new dims; element count must match.
  Tensor reshaped(std::size_t rows, std::size_t cols) const;
  void fill(float v);

  // Value equality (IEEE ==, so NaN != NaN).
  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

// Bitwise equality of dims and payload; the check used for "bit-exact" contracts.
bool bit_equal(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Kernels. Every kernel is deterministic and single-threaded; dot products
// accumulate in float, left to right over the shared index.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T and a^T * b without materialising the transpose.
Tensor matmul_bt(const Tensor& a, const Tensor& b);
Tensor matmul_at(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
// x + b with the 1xN row b broadcast across every row of x.
Tensor add_row_bias(const Tensor& x, const Tensor& b);
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
float sigmoid(float x);
// Row-wise softmax (max-subtracted).
Tensor softmax_rows(const Tensor& a);

// Column vector (rows x 1) of per-row sums.
Tensor row_sums(const Tensor& a);
// 1 x cols mean over rows.
Tensor mean_rows(const Tensor& a);
float sum(const Tensor& a);

// -log softmax(logits)[label] for a 1xC row of logits.
Tensor cross_entropy(const Tensor& logits, std::size_t label);
// Binary cross-entropy on a raw score s (the C=2 case with logits [0, s]).
float sigmoid_cross_entropy(float score, float label);

}  // namespace duet

#endif  // DUET_TENSOR_HPP_
