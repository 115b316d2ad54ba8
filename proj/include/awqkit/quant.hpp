// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "awqkit/tensor.hpp"

namespace awqkit {

enum class QuantMode : uint8_t { Symmetric = 0, Asymmetric = 1 };

const char* quant_mode_name(QuantMode m);
QuantMode quant_mode_from_name(const std::string& name);

std::vector<float> default_clip_grid();  // {1.00, 0.95, ..., 0.50}

struct QuantConfig {
  int bits = 4;            // one of {2, 3, 4, 8}
  int64_t group_size = 128;
  QuantMode mode = QuantMode::Symmetric;
  std::vector<float> clip_grid = default_clip_grid();
  int alpha_grid_size = 20;

  void validate() const;  // throws ValueError on any bad field

  // Symmetric integer range [-2^(N-1), 2^(N-1)-1]; asymmetric [0, 2^N-1].
  int64_t qmin() const;
  int64_t qmax() const;
};

// Group-wise quantized weights before packing. Groups tile each row along the
// input dimension; a trailing partial group carries its own scale.
struct GroupQuant {
  std::vector<int32_t> qvals;   // rows * cols, row-major
  std::vector<float> scales;    // rows * groups_per_row
  std::vector<int32_t> zeros;   // same length as scales in asymmetric mode, else empty
  int64_t rows = 0;
  int64_t cols = 0;
  int64_t group_size = 0;
  int bits = 0;
  QuantMode mode = QuantMode::Symmetric;

  int64_t groups_per_row() const { return ceil_div(cols, group_size); }
  int64_t group_index(int64_t r, int64_t c) const { return r * groups_per_row() + c / group_size; }
};

// Round-to-nearest group quantization. Symmetric: delta = max|w_g| / 2^(N-1),
// q = clamp(round(w/delta)); the group max always lands one clamp step short
// of its exact level, a consequence of the two's-complement range. Asymmetric:
// delta = (max-min)/(2^N-1), zero = -round(min/delta). Rounding is
// half-away-from-zero. An all-zero group stores delta = 1 with q = 0.
GroupQuant quantize_group_rtn(const Tensor& w, const QuantConfig& cfg);

// Same, with a per-output-row max-shrink ratio applied when deriving each
// group's step (clip ratio 1.0 reproduces quantize_group_rtn bit-exactly).
GroupQuant quantize_group_rtn_clipped(const Tensor& w, const QuantConfig& cfg,
                                      std::span<const float> row_clip);

Tensor dequantize(const GroupQuant& gq);

// || matmul(dequantize(quantize(w)), x) - matmul(w, x) ||_F
double quant_error(const Tensor& w, const Tensor& x, const QuantConfig& cfg);

}  // namespace awqkit
