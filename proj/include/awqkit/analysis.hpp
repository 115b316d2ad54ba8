// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "awqkit/quant.hpp"
#include "awqkit/tensor.hpp"

namespace awqkit {

// Per-input-channel mean |x| plus the cached calibration activations that
// produced it.
struct CalibStats {
  std::vector<float> per_channel_mag;  // length = in_features
  Tensor activations;                  // [tokens, in_features]
  int64_t token_count = 0;
};

CalibStats collect_calib_stats(const Tensor& x);

enum class SaliencyCriterion : uint8_t { Activation = 0, WeightNorm = 1, Random = 2 };

const char* saliency_criterion_name(SaliencyCriterion c);

// Outcome of quantizing a layer while keeping a fraction of input channels at
// full precision.
struct SaliencyReport {
  SaliencyCriterion criterion = SaliencyCriterion::Activation;
  double protected_fraction = 0.0;
  std::vector<int64_t> protected_channels;
  double layer_error_protected = 0.0;
  double layer_error_rtn = 0.0;
  uint64_t seed = 0;        // generator seed for the random criterion
  bool degenerate = false;  // requested fraction selected zero channels

  std::string to_text() const;
  std::string to_record() const;  // one-line JSON
  static SaliencyReport from_record(const std::string& line);
};

// Quantizes every input channel except the protected set (restored at full
// precision) and reports the layer output error against the FP reference,
// next to the fully quantized baseline.
SaliencyReport mixed_precision_eval(const Tensor& w, const Tensor& x, const QuantConfig& cfg,
                                    SaliencyCriterion criterion, double fraction,
                                    uint64_t seed = 0x5a11e47);

// Effect of multiplying the most activation-salient weight columns by a
// scalar s (and dividing the matching activation columns by s) on the
// per-group quantization step and the end-to-end layer error.
struct ScaleStats {
  double s = 1.0;
  double frac_delta_changed = 0.0;          // over all groups
  double frac_delta_changed_salient = 0.0;  // over groups containing a salient channel
  double mean_delta_ratio = 1.0;            // mean delta'/delta over all groups
  double mean_error_ratio = 1.0;            // mean (delta'/delta)/s over salient groups
  double layer_error = 0.0;
  double salient_fraction = 0.0;

  std::string to_text() const;
  std::string to_record() const;
  static ScaleStats from_record(const std::string& line);
};

ScaleStats scale_salient_stats(const Tensor& w, const Tensor& x, const QuantConfig& cfg,
                               double salient_fraction, double s);

// Channel selection shared by the analyses: indices of the top
// round(fraction*n) channels under the given criterion, deterministic
// tie-break toward lower index.
std::vector<int64_t> select_channels(SaliencyCriterion criterion, const Tensor& w,
                                     const std::vector<float>& per_channel_mag, double fraction,
                                     uint64_t seed);

}  // namespace awqkit
