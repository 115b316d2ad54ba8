// SPDX-License-Identifier: Apache-2.0
#include "awqkit/quant.hpp"

#include <algorithm>
#include <cmath>

namespace awqkit {

const char* quant_mode_name(QuantMode m) {
  return m == QuantMode::Symmetric ? "symmetric" : "asymmetric";
}

QuantMode quant_mode_from_name(const std::string& name) {
  if (name == "symmetric") return QuantMode::Symmetric;
  if (name == "asymmetric") return QuantMode::Asymmetric;
  throw ValueError("unknown quantization mode '" + name + "' (symmetric|asymmetric)");
}

std::vector<float> default_clip_grid() {
  std::vector<float> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(1.0f - 0.05f * static_cast<float>(i));
  return grid;
}

void QuantConfig::validate() const {
  if (bits != 2 && bits != 3 && bits != 4 && bits != 8)
    throw ValueError("bits must be one of {2, 3, 4, 8}, got " + std::to_string(bits));
  if (group_size < 1)
    throw ValueError("group_size must be >= 1, got " + std::to_string(group_size));
  if (clip_grid.empty()) throw ValueError("clip_grid must not be empty");
  for (float r : clip_grid) {
    if (!(r > 0.0f && r <= 1.0f))
      throw ValueError("clip ratio " + std::to_string(r) + " outside (0, 1]");
  }
  if (alpha_grid_size < 1)
    throw ValueError("alpha_grid_size must be >= 1, got " + std::to_string(alpha_grid_size));
}

int64_t QuantConfig::qmin() const {
  return mode == QuantMode::Symmetric ? -(int64_t{1} << (bits - 1)) : 0;
}

int64_t QuantConfig::qmax() const {
  return mode == QuantMode::Symmetric ? (int64_t{1} << (bits - 1)) - 1 : (int64_t{1} << bits) - 1;
}

namespace {

// Half-away-from-zero, fixed for bit-exact tests.
inline int32_t round_half_away(float v) { return static_cast<int32_t>(std::lround(v)); }

inline int32_t clamp_q(int64_t q, int64_t lo, int64_t hi) {
  return static_cast<int32_t>(std::clamp<int64_t>(q, lo, hi));
}

}  // namespace

GroupQuant quantize_group_rtn(const Tensor& w, const QuantConfig& cfg) {
  return quantize_group_rtn_clipped(w, cfg, {});
}

GroupQuant quantize_group_rtn_clipped(const Tensor& w, const QuantConfig& cfg,
                                      std::span<const float> row_clip) {
  cfg.validate();
  const int64_t rows = w.rows(), cols = w.cols();
  if (!row_clip.empty() && static_cast<int64_t>(row_clip.size()) != rows)
    throw ShapeError("row_clip length " + std::to_string(row_clip.size()) + " vs rows " +
                     std::to_string(rows));
  w.check_finite("quantize_group_rtn");

  GroupQuant gq;
  gq.rows = rows;
  gq.cols = cols;
  gq.group_size = cfg.group_size;
  gq.bits = cfg.bits;
  gq.mode = cfg.mode;
  gq.qvals.assign(static_cast<size_t>(rows * cols), 0);
  const int64_t gpr = gq.groups_per_row();
  gq.scales.assign(static_cast<size_t>(rows * gpr), 1.0f);
  if (cfg.mode == QuantMode::Asymmetric) gq.zeros.assign(static_cast<size_t>(rows * gpr), 0);

  const int64_t lo = cfg.qmin(), hi = cfg.qmax();
  const float levels_half = static_cast<float>(int64_t{1} << (cfg.bits - 1));
  const float levels_full = static_cast<float>((int64_t{1} << cfg.bits) - 1);

  for (int64_t r = 0; r < rows; ++r) {
    const float clip = row_clip.empty() ? 1.0f : row_clip[r];
    const float* wr = w.data.data() + r * cols;
    for (int64_t g = 0; g < gpr; ++g) {
      const int64_t c0 = g * cfg.group_size;
      const int64_t c1 = std::min(cols, c0 + cfg.group_size);
      float gmin = wr[c0], gmax = wr[c0], gabs = 0.0f;
      for (int64_t c = c0; c < c1; ++c) {
        gmin = std::min(gmin, wr[c]);
        gmax = std::max(gmax, wr[c]);
        gabs = std::max(gabs, std::fabs(wr[c]));
      }

      float delta;
      int32_t zero = 0;
      if (cfg.mode == QuantMode::Symmetric) {
        delta = gabs == 0.0f ? 1.0f : clip * gabs / levels_half;
      } else {
        const float range = clip * (gmax - gmin);
        if (gmax == 0.0f && gmin == 0.0f) {
          delta = 1.0f;
        } else if (range < kDivEps) {
          // Flat nonzero group: step sized so the constant reconstructs exactly.
          delta = gabs / levels_full;
          zero = -round_half_away(gmin / delta);
        } else {
          delta = range / levels_full;
          zero = -round_half_away(clip * gmin / delta);
        }
      }

      const int64_t gi = r * gpr + g;
      gq.scales[gi] = delta;
      if (cfg.mode == QuantMode::Asymmetric) gq.zeros[gi] = zero;
      int32_t* qr = gq.qvals.data() + r * cols;
      for (int64_t c = c0; c < c1; ++c) {
        const int64_t q = static_cast<int64_t>(round_half_away(wr[c] / delta)) + zero;
        qr[c] = clamp_q(q, lo, hi);
      }
    }
  }
  return gq;
}

Tensor dequantize(const GroupQuant& gq) {
  Tensor out({gq.rows, gq.cols});
  const int64_t gpr = gq.groups_per_row();
  for (int64_t r = 0; r < gq.rows; ++r) {
    const int32_t* qr = gq.qvals.data() + r * gq.cols;
    float* wr = out.data.data() + r * gq.cols;
    for (int64_t g = 0; g < gpr; ++g) {
      const int64_t c0 = g * gq.group_size;
      const int64_t c1 = std::min(gq.cols, c0 + gq.group_size);
      const float delta = gq.scales[r * gpr + g];
      const int32_t zero = gq.zeros.empty() ? 0 : gq.zeros[r * gpr + g];
      for (int64_t c = c0; c < c1; ++c) wr[c] = delta * static_cast<float>(qr[c] - zero);
    }
  }
  return out;
}

double quant_error(const Tensor& w, const Tensor& x, const QuantConfig& cfg) {
  const Tensor wq = dequantize(quantize_group_rtn(w, cfg));
  return frobenius_norm(sub(matmul(wq, x), matmul(w, x)));
}

}  // namespace awqkit
