// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "awqkit/analysis.hpp"
#include "awqkit/quant.hpp"

namespace awqkit {

// Result of the per-layer exponent search. The grid always contains alpha=0
// (no scaling), so loss <= rtn_loss by construction.
struct ScaleSearchResult {
  float alpha = 0.0f;
  std::vector<float> s;            // per-input-channel scale
  double loss = 0.0;
  double rtn_loss = 0.0;
  std::vector<float> clip_ratios;  // filled by quantize_layer_awq
  bool zero_sx_warning = false;    // all-zero activation stats; scaling skipped
};

// || matmul(dequantize(quantize(w . diag(s))), diag(s)^-1 . x) - matmul(w, x) ||_F
// Throws ValueError naming the channel if any s[i] <= 0.
double awq_loss(const Tensor& w, const Tensor& x, std::span<const float> s,
                const QuantConfig& cfg);

// Per-channel scale vector s_X^alpha with dead channels (s_X == 0) pinned to 1.
std::vector<float> scales_from_alpha(const std::vector<float>& per_channel_mag, float alpha);

// Grid search over alpha in {0, 1/(K-1), ..., 1}, K = cfg.alpha_grid_size
// (K = 1 degenerates to {0}). Ties break toward smaller alpha.
ScaleSearchResult search_scales(const Tensor& w, const CalibStats& calib, const QuantConfig& cfg);

// Per-output-row search over cfg.clip_grid for the max-shrink ratio minimizing
// ||(w_hat_row - w_row) . x^T||^2, i.e. the row's exact contribution to the
// layer output error. Operates on the already-scaled weight and activations.
// Ties keep the earliest grid entry.
std::vector<float> search_clip(const Tensor& w_scaled, const Tensor& x_scaled,
                               const QuantConfig& cfg);

// Scale, clip, quantize: the full per-layer pipeline. `s` stays with the layer
// and is applied to incoming activations at inference time.
struct QuantizedLayer {
  GroupQuant gq;  // quantization of clip(w . diag(s))
  std::vector<float> s;
  QuantConfig cfg;
  float alpha = 0.0f;
  double loss = 0.0;  // after clipping, on the calibration set
  double rtn_loss = 0.0;
  std::vector<float> clip_ratios;
  bool zero_sx_warning = false;
};

QuantizedLayer quantize_layer_awq(const Tensor& w, const CalibStats& calib,
                                  const QuantConfig& cfg);

}  // namespace awqkit
