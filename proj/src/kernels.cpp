// SPDX-License-Identifier: Apache-2.0
#include "awqkit/kernels.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace awqkit {

using nlohmann::json;

void LinearLayerPacked::derive_inverse_scales() {
  awq_scale_inv.resize(awq_scale.size());
  for (size_t i = 0; i < awq_scale.size(); ++i) {
    const float s = fp16_to_fp32(awq_scale[i]);
    awq_scale_inv[i] = 1.0f / std::max(s, kDivEps);
  }
}

LinearLayerPacked pack_layer(const GroupQuant& gq, std::span<const float> s, PackLayout layout) {
  if (!s.empty() && static_cast<int64_t>(s.size()) != gq.cols)
    throw ShapeError("awq scale length " + std::to_string(s.size()) + " vs in_features " +
                     std::to_string(gq.cols));
  LinearLayerPacked layer;
  layer.out_features = gq.rows;
  layer.in_features = gq.cols;
  layer.group_size = gq.group_size;
  layer.bits = gq.bits;
  layer.mode = gq.mode;

  const bool is_signed = gq.mode == QuantMode::Symmetric;
  const int64_t block = pack_block_elems(layout, gq.bits);
  layer.padded_cols = round_up(gq.cols, block);

  // Row-padded copy so each row is a whole number of layout blocks.
  std::vector<int32_t> padded(static_cast<size_t>(gq.rows * layer.padded_cols), 0);
  for (int64_t r = 0; r < gq.rows; ++r)
    std::copy_n(gq.qvals.data() + r * gq.cols, gq.cols, padded.data() + r * layer.padded_cols);
  layer.packed = pack(padded, gq.bits, layout, is_signed);

  layer.scales.resize(gq.scales.size());
  for (size_t i = 0; i < gq.scales.size(); ++i) layer.scales[i] = fp32_to_fp16(gq.scales[i]);
  layer.zeros = gq.zeros;

  layer.awq_scale.resize(static_cast<size_t>(gq.cols));
  for (int64_t i = 0; i < gq.cols; ++i)
    layer.awq_scale[i] = fp32_to_fp16(s.empty() ? 1.0f : s[i]);
  layer.derive_inverse_scales();
  return layer;
}

LinearLayerPacked pack_layer(const QuantizedLayer& layer, PackLayout layout) {
  return pack_layer(layer.gq, layer.s, layout);
}

KernelWorkspace KernelWorkspace::for_layer(const LinearLayerPacked& layer) {
  KernelWorkspace ws;
  ws.x_scaled.resize(static_cast<size_t>(layer.in_features));
  ws.qrow.resize(static_cast<size_t>(layer.padded_cols));
  return ws;
}

namespace {

void check_in_features(const LinearLayerPacked& layer, int64_t got) {
  if (got != layer.in_features)
    throw ShapeError("input length " + std::to_string(got) + " vs in_features " +
                     std::to_string(layer.in_features));
}

// One output row: unpack into ws.qrow, then per-group integer-by-activation
// dot scaled once by the group step.
inline float forward_row(const LinearLayerPacked& layer, int64_t r, const float* xs,
                         int32_t* qrow) {
  unpack_span(layer.packed.payload.data() + r * layer.row_payload_bytes(), layer.padded_cols,
              layer.bits, layer.packed.layout, layer.packed.signed_vals, qrow);
  const int64_t gpr = layer.groups_per_row();
  const bool asym = layer.mode == QuantMode::Asymmetric;
  float acc = 0.0f;
  for (int64_t g = 0; g < gpr; ++g) {
    const int64_t c0 = g * layer.group_size;
    const int64_t c1 = std::min(layer.in_features, c0 + layer.group_size);
    float qdot;
    if (asym) {
      float sum = 0.0f, xsum = 0.0f;
      for (int64_t c = c0; c < c1; ++c) {
        sum += static_cast<float>(qrow[c]) * xs[c];
        xsum += xs[c];
      }
      qdot = sum - static_cast<float>(layer.zeros[r * gpr + g]) * xsum;
    } else {
      // Fixed-order partial sums; the integer-to-float convert vectorizes.
      float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
      int64_t c = c0;
      for (; c + 4 <= c1; c += 4) {
        s0 += static_cast<float>(qrow[c]) * xs[c];
        s1 += static_cast<float>(qrow[c + 1]) * xs[c + 1];
        s2 += static_cast<float>(qrow[c + 2]) * xs[c + 2];
        s3 += static_cast<float>(qrow[c + 3]) * xs[c + 3];
      }
      for (; c < c1; ++c) s0 += static_cast<float>(qrow[c]) * xs[c];
      qdot = (s0 + s1) + (s2 + s3);
    }
    acc += fp16_to_fp32(layer.scales[r * gpr + g]) * qdot;
  }
  return acc;
}

}  // namespace

void gemv_fused(const LinearLayerPacked& layer, std::span<const float> x, std::span<float> y,
                KernelWorkspace& ws) {
  check_in_features(layer, static_cast<int64_t>(x.size()));
  if (static_cast<int64_t>(y.size()) != layer.out_features)
    throw ShapeError("output length " + std::to_string(y.size()) + " vs out_features " +
                     std::to_string(layer.out_features));
  for (int64_t i = 0; i < layer.in_features; ++i)
    ws.x_scaled[i] = x[i] * layer.awq_scale_inv[i];
  for (int64_t r = 0; r < layer.out_features; ++r)
    y[r] = forward_row(layer, r, ws.x_scaled.data(), ws.qrow.data());
}

std::vector<float> gemv_fused(const LinearLayerPacked& layer, std::span<const float> x) {
  std::vector<float> y(static_cast<size_t>(layer.out_features));
  KernelWorkspace ws = KernelWorkspace::for_layer(layer);
  gemv_fused(layer, x, y, ws);
  return y;
}

Tensor gemm_fused(const LinearLayerPacked& layer, const Tensor& x) {
  check_in_features(layer, x.cols());
  Tensor y({x.rows(), layer.out_features});
  KernelWorkspace ws = KernelWorkspace::for_layer(layer);
  for (int64_t t = 0; t < x.rows(); ++t) {
    gemv_fused(layer, x.row(t),
               std::span<float>(y.data.data() + t * layer.out_features,
                                static_cast<size_t>(layer.out_features)),
               ws);
  }
  return y;
}

Tensor dequantize_packed(const LinearLayerPacked& layer) {
  const std::vector<int32_t> q = unpack(layer.packed);
  const int64_t gpr = layer.groups_per_row();
  Tensor w({layer.out_features, layer.in_features});
  for (int64_t r = 0; r < layer.out_features; ++r) {
    for (int64_t g = 0; g < gpr; ++g) {
      const int64_t c0 = g * layer.group_size;
      const int64_t c1 = std::min(layer.in_features, c0 + layer.group_size);
      const float delta = fp16_to_fp32(layer.scales[r * gpr + g]);
      const int32_t zero = layer.zeros.empty() ? 0 : layer.zeros[r * gpr + g];
      for (int64_t c = c0; c < c1; ++c)
        w.at(r, c) = delta * static_cast<float>(q[r * layer.padded_cols + c] - zero);
    }
  }
  return w;
}

Tensor forward_reference(const LinearLayerPacked& layer, const Tensor& x) {
  check_in_features(layer, x.cols());
  return matmul(dequantize_packed(layer), scale_columns(x, layer.awq_scale_inv));
}

int64_t packed_weight_bytes(const LinearLayerPacked& layer) {
  return static_cast<int64_t>(layer.packed.payload.size()) +
         static_cast<int64_t>(layer.scales.size() * sizeof(uint16_t)) +
         static_cast<int64_t>(layer.zeros.size() * sizeof(int32_t)) +
         static_cast<int64_t>(layer.awq_scale.size() * sizeof(uint16_t));
}

// ---------------------------------------------------------------------------
// Micro-benchmark
// ---------------------------------------------------------------------------

namespace {

double median_ms(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string machine_string() {
  std::ostringstream os;
#if defined(__x86_64__)
  os << "x86_64";
#elif defined(__aarch64__)
  os << "aarch64";
#else
  os << "unknown-arch";
#endif
#if defined(__GNUC__) && !defined(__clang__)
  os << " gcc-" << __GNUC__ << "." << __GNUC_MINOR__;
#elif defined(__clang__)
  os << " clang-" << __clang_major__ << "." << __clang_minor__;
#endif
  os << " single-thread";
  return os.str();
}

}  // namespace

BenchRecord bench_kernel(const LinearLayerPacked& layer, int64_t tokens, int repeats) {
  if (repeats < 3) throw ValueError("repeats must be >= 3, got " + std::to_string(repeats));
  if (tokens < 1) throw ValueError("tokens must be >= 1");

  using clock = std::chrono::steady_clock;
  const Tensor x = random_normal(tokens, layer.in_features, 0x2decaf, 1.0f);

  BenchRecord rec;
  rec.out_features = layer.out_features;
  rec.in_features = layer.in_features;
  rec.tokens = tokens;
  rec.group_size = layer.group_size;
  rec.bits = layer.bits;
  rec.layout = layer.packed.layout;
  rec.repeats = repeats;
  rec.machine = machine_string();

  volatile float sink = 0.0f;  // keep the timed loops observable

  {
    KernelWorkspace ws = KernelWorkspace::for_layer(layer);
    Tensor y({tokens, layer.out_features});
    std::vector<double> times;
    for (int i = 0; i < repeats + 1; ++i) {  // first run warms caches
      const auto t0 = clock::now();
      for (int64_t t = 0; t < tokens; ++t) {
        gemv_fused(layer, x.row(t),
                   std::span<float>(y.data.data() + t * layer.out_features,
                                    static_cast<size_t>(layer.out_features)),
                   ws);
      }
      const auto t1 = clock::now();
      sink = sink + y.data[0];
      if (i > 0) times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    rec.fused_ms = median_ms(times);
  }

  {
    std::vector<double> times;
    for (int i = 0; i < repeats + 1; ++i) {
      const auto t0 = clock::now();
      const Tensor w = dequantize_packed(layer);  // materializes out x in floats
      const Tensor y = matmul(w, scale_columns(x, layer.awq_scale_inv));
      const auto t1 = clock::now();
      sink = sink + y.data[0];
      if (i > 0) times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    rec.baseline_ms = median_ms(times);
  }

  rec.speedup = rec.fused_ms > 0 ? rec.baseline_ms / rec.fused_ms : 0.0;
  rec.speedup_target_met = rec.speedup >= 1.2;

  rec.weight_bytes = packed_weight_bytes(layer);
  rec.fp32_equiv_bytes = layer.out_features * layer.in_features * 4;
  rec.fp16_equiv_bytes = layer.out_features * layer.in_features * 2;
  rec.reduction_vs_fp32 = static_cast<double>(rec.fp32_equiv_bytes) / rec.weight_bytes;
  rec.reduction_vs_fp16 = static_cast<double>(rec.fp16_equiv_bytes) / rec.weight_bytes;
  rec.activation_bytes = tokens * layer.in_features * 4;
  rec.output_bytes = tokens * layer.out_features * 4;
  rec.flops = 2.0 * static_cast<double>(layer.out_features) * static_cast<double>(layer.in_features) *
              static_cast<double>(tokens);
  rec.bytes_moved = static_cast<double>(rec.weight_bytes + rec.activation_bytes + rec.output_bytes);
  rec.arithmetic_intensity = rec.flops / rec.bytes_moved;
  rec.gbps = rec.bytes_moved / (rec.fused_ms * 1e-3) / 1e9;
  return rec;
}

std::string BenchRecord::to_text() const {
  std::ostringstream os;
  os << out_features << "x" << in_features << " int" << bits << "-g" << group_size << " "
     << pack_layout_name(layout) << " tokens=" << tokens << ": fused " << fused_ms
     << " ms, baseline " << baseline_ms << " ms, speedup " << speedup
     << (speedup_target_met ? "" : " [below 1.2x target]") << ", weight bytes " << weight_bytes
     << " (" << reduction_vs_fp32 << "x vs fp32, " << reduction_vs_fp16 << "x vs fp16), "
     << gbps << " GB/s, AI " << arithmetic_intensity << " flop/B";
  return os.str();
}

std::string BenchRecord::to_record() const {
  json j{{"record", "bench"},
         {"out_features", out_features},
         {"in_features", in_features},
         {"tokens", tokens},
         {"group_size", group_size},
         {"bits", bits},
         {"layout", pack_layout_name(layout)},
         {"repeats", repeats},
         {"fused_ms", fused_ms},
         {"baseline_ms", baseline_ms},
         {"speedup", speedup},
         {"speedup_target_met", speedup_target_met},
         {"weight_bytes", weight_bytes},
         {"fp32_equiv_bytes", fp32_equiv_bytes},
         {"fp16_equiv_bytes", fp16_equiv_bytes},
         {"activation_bytes", activation_bytes},
         {"output_bytes", output_bytes},
         {"reduction_vs_fp32", reduction_vs_fp32},
         {"reduction_vs_fp16", reduction_vs_fp16},
         {"flops", flops},
         {"bytes_moved", bytes_moved},
         {"gbps", gbps},
         {"arithmetic_intensity", arithmetic_intensity},
         {"machine", machine}};
  return j.dump();
}

BenchRecord BenchRecord::from_record(const std::string& line) {
  const json j = json::parse(line);
  BenchRecord r;
  r.out_features = j.at("out_features").get<int64_t>();
  r.in_features = j.at("in_features").get<int64_t>();
  r.tokens = j.at("tokens").get<int64_t>();
  r.group_size = j.at("group_size").get<int64_t>();
  r.bits = j.at("bits").get<int>();
  r.layout = pack_layout_from_name(j.at("layout").get<std::string>());
  r.repeats = j.at("repeats").get<int>();
  r.fused_ms = j.at("fused_ms").get<double>();
  r.baseline_ms = j.at("baseline_ms").get<double>();
  r.speedup = j.at("speedup").get<double>();
  r.speedup_target_met = j.at("speedup_target_met").get<bool>();
  r.weight_bytes = j.at("weight_bytes").get<int64_t>();
  r.fp32_equiv_bytes = j.at("fp32_equiv_bytes").get<int64_t>();
  r.fp16_equiv_bytes = j.at("fp16_equiv_bytes").get<int64_t>();
  r.activation_bytes = j.at("activation_bytes").get<int64_t>();
  r.output_bytes = j.at("output_bytes").get<int64_t>();
  r.reduction_vs_fp32 = j.at("reduction_vs_fp32").get<double>();
  r.reduction_vs_fp16 = j.at("reduction_vs_fp16").get<double>();
  r.flops = j.at("flops").get<double>();
  r.bytes_moved = j.at("bytes_moved").get<double>();
  r.gbps = j.at("gbps").get<double>();
  r.arithmetic_intensity = j.at("arithmetic_intensity").get<double>();
  r.machine = j.at("machine").get<std::string>();
  return r;
}

}  // namespace awqkit
