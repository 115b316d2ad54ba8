// SPDX-License-Identifier: Apache-2.0
#include "awqkit/awq.hpp"

#include <algorithm>
#include <cmath>

namespace awqkit {

namespace {

// y_ref = matmul(w, x) is invariant across the search grid; callers that
// evaluate many candidates compute it once.
double awq_loss_against(const Tensor& w, const Tensor& x, std::span<const float> s,
                        const QuantConfig& cfg, const Tensor& y_ref) {
  if (static_cast<int64_t>(s.size()) != w.cols())
    throw ShapeError("scale vector length " + std::to_string(s.size()) + " vs in_features " +
                     std::to_string(w.cols()));
  for (size_t i = 0; i < s.size(); ++i) {
    if (!(s[i] > 0.0f))
      throw ValueError("non-positive scale " + std::to_string(s[i]) + " at channel " +
                       std::to_string(i));
  }
  const Tensor w_scaled = scale_columns(w, s);
  const Tensor x_scaled = scale_columns_recip(x, s);
  const Tensor w_hat = dequantize(quantize_group_rtn(w_scaled, cfg));
  return frobenius_norm(sub(matmul(w_hat, x_scaled), y_ref));
}

}  // namespace

double awq_loss(const Tensor& w, const Tensor& x, std::span<const float> s,
                const QuantConfig& cfg) {
  return awq_loss_against(w, x, s, cfg, matmul(w, x));
}

std::vector<float> scales_from_alpha(const std::vector<float>& per_channel_mag, float alpha) {
  std::vector<float> s(per_channel_mag.size());
  for (size_t i = 0; i < s.size(); ++i)
    s[i] = per_channel_mag[i] > 0.0f ? std::pow(per_channel_mag[i], alpha) : 1.0f;
  return s;
}

ScaleSearchResult search_scales(const Tensor& w, const CalibStats& calib,
                                const QuantConfig& cfg) {
  cfg.validate();
  if (static_cast<int64_t>(calib.per_channel_mag.size()) != w.cols())
    throw ShapeError("calibration stats for " + std::to_string(calib.per_channel_mag.size()) +
                     " channels, layer has " + std::to_string(w.cols()));

  ScaleSearchResult res;
  const bool all_zero = std::all_of(calib.per_channel_mag.begin(), calib.per_channel_mag.end(),
                                    [](float v) { return v == 0.0f; });

  const Tensor y_ref = matmul(w, calib.activations);
  const int k = cfg.alpha_grid_size;
  res.alpha = 0.0f;
  res.s = scales_from_alpha(calib.per_channel_mag, 0.0f);
  res.rtn_loss = awq_loss_against(w, calib.activations, res.s, cfg, y_ref);
  res.loss = res.rtn_loss;
  if (all_zero) {
    res.zero_sx_warning = true;
    return res;
  }

  for (int j = 1; j < k; ++j) {
    const float alpha = static_cast<float>(j) / static_cast<float>(k - 1);
    const std::vector<float> s = scales_from_alpha(calib.per_channel_mag, alpha);
    const double loss = awq_loss_against(w, calib.activations, s, cfg, y_ref);
    if (loss < res.loss) {
      res.loss = loss;
      res.alpha = alpha;
      res.s = s;
    }
  }
  return res;
}

std::vector<float> search_clip(const Tensor& w_scaled, const Tensor& x_scaled,
                               const QuantConfig& cfg) {
  cfg.validate();
  const int64_t rows = w_scaled.rows(), cols = w_scaled.cols();
  const int64_t tokens = x_scaled.rows();
  if (x_scaled.cols() != cols)
    throw ShapeError("clip search: weight " + shape_str(w_scaled.shape) + " vs activations " +
                     shape_str(x_scaled.shape));

  std::vector<float> best(static_cast<size_t>(rows), 1.0f);
  std::vector<double> best_err(static_cast<size_t>(rows), 0.0);
  std::vector<float> row_clip(static_cast<size_t>(rows));

  bool first = true;
  for (float ratio : cfg.clip_grid) {
    std::fill(row_clip.begin(), row_clip.end(), ratio);
    const GroupQuant gq = quantize_group_rtn_clipped(w_scaled, cfg, row_clip);
    const Tensor w_hat = dequantize(gq);
    // err_row = || (w_hat_row - w_row) . x^T ||^2, accumulated per token.
    for (int64_t r = 0; r < rows; ++r) {
      const float* wr = w_scaled.data.data() + r * cols;
      const float* hr = w_hat.data.data() + r * cols;
      double err = 0.0;
      for (int64_t t = 0; t < tokens; ++t) {
        const float* xr = x_scaled.data.data() + t * cols;
        float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
        int64_t c = 0;
        for (; c + 4 <= cols; c += 4) {
          s0 += (hr[c] - wr[c]) * xr[c];
          s1 += (hr[c + 1] - wr[c + 1]) * xr[c + 1];
          s2 += (hr[c + 2] - wr[c + 2]) * xr[c + 2];
          s3 += (hr[c + 3] - wr[c + 3]) * xr[c + 3];
        }
        for (; c < cols; ++c) s0 += (hr[c] - wr[c]) * xr[c];
        const float dot = (s0 + s1) + (s2 + s3);
        err += static_cast<double>(dot) * dot;
      }
      if (first || err < best_err[r]) {
        best_err[r] = err;
        best[r] = ratio;
      }
    }
    first = false;
  }
  return best;
}

QuantizedLayer quantize_layer_awq(const Tensor& w, const CalibStats& calib,
                                  const QuantConfig& cfg) {
  const ScaleSearchResult scale = search_scales(w, calib, cfg);

  const Tensor w_scaled = scale_columns(w, scale.s);
  const Tensor x_scaled = scale_columns_recip(calib.activations, scale.s);
  const std::vector<float> clip = search_clip(w_scaled, x_scaled, cfg);

  QuantizedLayer layer;
  layer.gq = quantize_group_rtn_clipped(w_scaled, cfg, clip);
  layer.s = scale.s;
  layer.cfg = cfg;
  layer.alpha = scale.alpha;
  layer.rtn_loss = scale.rtn_loss;
  layer.clip_ratios = clip;
  layer.zero_sx_warning = scale.zero_sx_warning;
  layer.loss =
      frobenius_norm(sub(matmul(dequantize(layer.gq), x_scaled), matmul(w, calib.activations)));
  return layer;
}

}  // namespace awqkit
