// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "awqkit/awq.hpp"
#include "awqkit/pack.hpp"
#include "awqkit/quant.hpp"

namespace awqkit {

// A linear layer in deployment form: packed low-bit payload, fp16-stored
// per-group scales, and the per-input-channel reciprocal of the smoothing
// scale, applied to incoming activations. Rows are padded to the layout block
// so every row starts on a byte boundary; padded columns are outside the
// logical shape and never enter the accumulation.
struct LinearLayerPacked {
  PackedWeights packed;            // out_features * padded_cols elements
  std::vector<uint16_t> scales;    // fp16 bits, out_features * groups_per_row
  std::vector<int32_t> zeros;      // asymmetric only
  std::vector<uint16_t> awq_scale; // fp16 bits, length in_features (the stored s)
  std::vector<float> awq_scale_inv;  // fp32 1/s, derived from awq_scale
  int64_t out_features = 0;
  int64_t in_features = 0;
  int64_t padded_cols = 0;
  int64_t group_size = 0;
  int bits = 4;
  QuantMode mode = QuantMode::Symmetric;

  int64_t groups_per_row() const { return ceil_div(in_features, group_size); }
  int64_t row_payload_bytes() const { return padded_cols * bits / 8; }
  // Scale for group g of row r as the fp32 value of the stored fp16.
  float scale_at(int64_t r, int64_t g) const {
    return fp16_to_fp32(scales[r * groups_per_row() + g]);
  }
  // Rebuilds awq_scale_inv from awq_scale; called by every construction path.
  void derive_inverse_scales();
};

// Packs a group-quantized weight into the given layout. `s` is the per-input
// channel scale the weight was quantized under (empty means all-ones). Scales
// are rounded to fp16 at this boundary; quantize-then-pack and load-from-disk
// therefore produce identical layers.
LinearLayerPacked pack_layer(const GroupQuant& gq, std::span<const float> s, PackLayout layout);
LinearLayerPacked pack_layer(const QuantizedLayer& layer, PackLayout layout);

// Scratch buffers for the fused kernels, sized per layer: one scaled copy of
// the current activation row and one unpacked weight row. Nothing of size
// out_features x in_features is ever allocated.
struct KernelWorkspace {
  std::vector<float> x_scaled;   // in_features
  std::vector<int32_t> qrow;     // padded_cols

  static KernelWorkspace for_layer(const LinearLayerPacked& layer);
  int64_t bytes() const {
    return static_cast<int64_t>(x_scaled.size() * sizeof(float) + qrow.size() * sizeof(int32_t));
  }
};

// y[o] = sum_g delta[o,g] * sum_{i in g} q[o,i] * (x[i] / s[i]), groups
// accumulated in index order for run-to-run bit-identical output.
std::vector<float> gemv_fused(const LinearLayerPacked& layer, std::span<const float> x);
void gemv_fused(const LinearLayerPacked& layer, std::span<const float> x, std::span<float> y,
                KernelWorkspace& ws);

// Batched forward; token t equals gemv_fused on row t bit-exactly.
Tensor gemm_fused(const LinearLayerPacked& layer, const Tensor& x);

// Oracle route: unpack everything, dequantize, then tensor matmul on the
// scaled activations. Kept deliberately independent of the fused loops.
Tensor forward_reference(const LinearLayerPacked& layer, const Tensor& x);

// Dense fp32 weight reconstruction (used by the reference path and tests).
Tensor dequantize_packed(const LinearLayerPacked& layer);

// Stored bytes the forward pass reads for the weights: payload + fp16 scales
// + zeros + fp16 awq scale vector.
int64_t packed_weight_bytes(const LinearLayerPacked& layer);

struct BenchRecord {
  int64_t out_features = 0, in_features = 0, tokens = 0, group_size = 0;
  int bits = 0;
  PackLayout layout = PackLayout::Linear;
  int repeats = 0;
  double fused_ms = 0.0;     // median
  double baseline_ms = 0.0;  // median of unpack-to-buffer-then-matmul
  double speedup = 0.0;
  bool speedup_target_met = false;  // soft 1.2x goal, reported not gated
  int64_t weight_bytes = 0;
  int64_t fp32_equiv_bytes = 0, fp16_equiv_bytes = 0;
  int64_t activation_bytes = 0, output_bytes = 0;
  double reduction_vs_fp32 = 0.0, reduction_vs_fp16 = 0.0;
  double flops = 0.0;
  double bytes_moved = 0.0;
  double gbps = 0.0;
  double arithmetic_intensity = 0.0;
  std::string machine;

  std::string to_text() const;
  std::string to_record() const;  // one-line JSON
  static BenchRecord from_record(const std::string& line);
};

// Times the fused forward against the naive materialize-then-matmul baseline
// on a seeded random input. Single-threaded; wall-clock medians over
// `repeats` runs (>= 3).
BenchRecord bench_kernel(const LinearLayerPacked& layer, int64_t tokens, int repeats);

}  // namespace awqkit
