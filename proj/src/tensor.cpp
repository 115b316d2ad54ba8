// SPDX-License-Identifier: Apache-2.0
#include "awqkit/tensor.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace awqkit {

namespace {

int64_t product(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

void require_2d(const Tensor& t, const char* what) {
  if (t.shape.size() != 2)
    throw ShapeError(std::string(what) + ": expected 2-D tensor, got shape " + shape_str(t.shape));
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  if (static_cast<int64_t>(data.size()) != product(shape))
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
}

Tensor::Tensor(std::vector<int64_t> shape_) : shape(std::move(shape_)) {
  data.assign(static_cast<size_t>(product(shape)), 0.0f);
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data.size()); }

int64_t Tensor::rows() const {
  require_2d(*this, "rows()");
  return shape[0];
}

int64_t Tensor::cols() const {
  require_2d(*this, "cols()");
  return shape[1];
}

void Tensor::check_finite(const char* what) const {
  for (size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i]))
      throw ValueError(std::string(what) + ": non-finite value at element " + std::to_string(i));
  }
}

Tensor matmul(const Tensor& w, const Tensor& x) {
  require_2d(w, "matmul(w)");
  require_2d(x, "matmul(x)");
  if (w.cols() != x.cols())
    throw ShapeError("matmul: inner dimensions differ, w " + shape_str(w.shape) + " vs x " +
                     shape_str(x.shape));
  const int64_t out = w.rows(), in = w.cols(), tokens = x.rows();
  Tensor y({tokens, out});
  for (int64_t t = 0; t < tokens; ++t) {
    const float* xr = x.data.data() + t * in;
    float* yr = y.data.data() + t * out;
    for (int64_t o = 0; o < out; ++o) {
      const float* wr = w.data.data() + o * in;
      // Four fixed-order partial sums: vectorizable yet bit-stable run to run.
      float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
      int64_t i = 0;
      for (; i + 4 <= in; i += 4) {
        s0 += wr[i] * xr[i];
        s1 += wr[i + 1] * xr[i + 1];
        s2 += wr[i + 2] * xr[i + 2];
        s3 += wr[i + 3] * xr[i + 3];
      }
      for (; i < in; ++i) s0 += wr[i] * xr[i];
      yr[o] = (s0 + s1) + (s2 + s3);
    }
  }
  return y;
}

double frobenius_norm(const Tensor& a) {
  double ss = 0.0;
  for (float v : a.data) ss += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(ss);
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(what) + ": shapes differ, " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  return out;
}

double relative_error(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "relative_error");
  const double denom = frobenius_norm(b);
  return frobenius_norm(sub(a, b)) / (denom > 0 ? denom : 1.0);
}

Tensor scale_columns(const Tensor& t, std::span<const float> s) {
  require_2d(t, "scale_columns");
  if (static_cast<int64_t>(s.size()) != t.cols())
    throw ShapeError("scale_columns: scale length " + std::to_string(s.size()) +
                     " vs cols " + std::to_string(t.cols()));
  Tensor out = t;
  for (int64_t r = 0; r < t.rows(); ++r) {
    float* p = out.data.data() + r * t.cols();
    for (int64_t c = 0; c < t.cols(); ++c) p[c] *= s[c];
  }
  return out;
}

Tensor scale_columns_recip(const Tensor& t, std::span<const float> s) {
  require_2d(t, "scale_columns_recip");
  if (static_cast<int64_t>(s.size()) != t.cols())
    throw ShapeError("scale_columns_recip: scale length " + std::to_string(s.size()) +
                     " vs cols " + std::to_string(t.cols()));
  Tensor out = t;
  for (int64_t r = 0; r < t.rows(); ++r) {
    float* p = out.data.data() + r * t.cols();
    for (int64_t c = 0; c < t.cols(); ++c) {
      const float d = std::fabs(s[c]) < kDivEps ? (s[c] < 0 ? -kDivEps : kDivEps) : s[c];
      p[c] /= d;
    }
  }
  return out;
}

std::vector<float> column_norms(const Tensor& t) {
  require_2d(t, "column_norms");
  std::vector<double> ss(static_cast<size_t>(t.cols()), 0.0);
  for (int64_t r = 0; r < t.rows(); ++r) {
    const float* p = t.data.data() + r * t.cols();
    for (int64_t c = 0; c < t.cols(); ++c) ss[c] += static_cast<double>(p[c]) * p[c];
  }
  std::vector<float> out(ss.size());
  for (size_t c = 0; c < ss.size(); ++c) out[c] = static_cast<float>(std::sqrt(ss[c]));
  return out;
}

Tensor random_normal(int64_t rows, int64_t cols, uint64_t seed, float stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, stddev);
  Tensor t({rows, cols});
  for (auto& v : t.data) v = dist(rng);
  t.check_finite("random_normal");
  return t;
}

Tensor random_uniform(int64_t rows, int64_t cols, uint64_t seed, float lo, float hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t({rows, cols});
  for (auto& v : t.data) v = dist(rng);
  t.check_finite("random_uniform");
  return t;
}

}  // namespace awqkit
