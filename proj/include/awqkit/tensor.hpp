// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "awqkit/common.hpp"

namespace awqkit {

// Dense row-major fp32 matrix/vector. 2-D weights are [out_features,
// in_features]; activations are [tokens, in_features]. Tensors are treated as
// immutable once built: operations allocate fresh outputs, so sharing across
// threads for reading is safe.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<int64_t> shape_, std::vector<float> data_);
  explicit Tensor(std::vector<int64_t> shape_);  // zero-filled

  int64_t numel() const;
  int64_t rows() const;  // 2-D only
  int64_t cols() const;  // 2-D only

  float at(int64_t r, int64_t c) const { return data[r * cols() + c]; }
  float& at(int64_t r, int64_t c) { return data[r * cols() + c]; }
  std::span<const float> row(int64_t r) const { return {data.data() + r * cols(), static_cast<size_t>(cols())}; }

  // Throws ValueError naming the first non-finite element. Used by every
  // constructor path that ingests external or generated data.
  void check_finite(const char* what) const;
};

// y[t,o] = sum_i w[o,i] * x[t,i]; fp32 accumulation in fixed index order.
Tensor matmul(const Tensor& w, const Tensor& x);

double frobenius_norm(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);

// ||a - b||_F / max(||b||_F, eps)
double relative_error(const Tensor& a, const Tensor& b);

// Column i multiplied by s[i] (s.size() == cols). scale_columns_recip divides.
Tensor scale_columns(const Tensor& t, std::span<const float> s);
Tensor scale_columns_recip(const Tensor& t, std::span<const float> s);

// Per-column L2 norms of a 2-D tensor.
std::vector<float> column_norms(const Tensor& t);

// Seeded generators (mt19937_64). Outputs are validated finite.
Tensor random_normal(int64_t rows, int64_t cols, uint64_t seed, float stddev = 1.0f);
Tensor random_uniform(int64_t rows, int64_t cols, uint64_t seed, float lo, float hi);

}  // namespace awqkit
