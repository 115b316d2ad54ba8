// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "awqkit/kernels.hpp"
#include "test_util.hpp"

using namespace awqkit;

namespace {

LinearLayerPacked make_layer(int64_t out, int64_t in, int bits, int64_t group_size,
                             PackLayout layout, QuantMode mode, uint64_t seed,
                             bool with_awq_scale = false) {
  QuantConfig cfg;
  cfg.bits = bits;
  cfg.group_size = group_size;
  cfg.mode = mode;
  const Tensor w = random_normal(out, in, seed);
  const GroupQuant gq = quantize_group_rtn(w, cfg);
  std::vector<float> s;
  if (with_awq_scale) {
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<float> dist(0.5f, 2.0f);
    s.resize(static_cast<size_t>(in));
    for (auto& v : s) v = dist(rng);
  }
  return pack_layer(gq, s, layout);
}

}  // namespace

TEST_CASE("a permutation-encoding layer permutes and scales its input") {
  // One nonzero per row; it is its group's max, so it lands one clamp step
  // below its own level: q = 7, delta = 0.875/8, value 7*0.109375 = 0.765625
  // exactly (also exact in fp16). The output is that scaled permutation of x.
  const int64_t n = 8;
  QuantConfig cfg;
  cfg.bits = 4;
  cfg.group_size = n;
  Tensor w({n, n});
  for (int64_t r = 0; r < n; ++r) w.at(r, (r + 3) % n) = 0.875f;
  const GroupQuant gq = quantize_group_rtn(w, cfg);
  const LinearLayerPacked layer = pack_layer(gq, {}, PackLayout::Linear);

  std::vector<float> x(n);
  for (int64_t i = 0; i < n; ++i) x[i] = static_cast<float>(i + 1);
  const std::vector<float> y = gemv_fused(layer, x);
  for (int64_t r = 0; r < n; ++r) CHECK(y[r] == 0.765625f * x[(r + 3) % n]);
}

TEST_CASE("zero weights give zero output") {
  QuantConfig cfg;
  const Tensor w({16, 32});
  const LinearLayerPacked layer = pack_layer(quantize_group_rtn(w, cfg), {}, PackLayout::Linear);
  const Tensor x = random_normal(1, 32, 3);
  for (float v : gemv_fused(layer, x.row(0))) CHECK(v == 0.0f);
}

TEST_CASE("fused gemv matches the reference path across configurations") {
  uint64_t seed = 100;
  for (int bits : {2, 3, 4, 8}) {
    for (PackLayout layout : {PackLayout::Linear, PackLayout::Simd128, PackLayout::Gpu8}) {
      if (!pack_layout_supported(layout, bits)) continue;
      for (int64_t gs : {8, 32, 100}) {
        for (QuantMode mode : {QuantMode::Symmetric, QuantMode::Asymmetric}) {
          const LinearLayerPacked layer = make_layer(24, 100, bits, gs, layout, mode, seed++, true);
          const Tensor x = random_normal(3, 100, seed++);
          const Tensor ref = forward_reference(layer, x);
          const Tensor fused = gemm_fused(layer, x);
          CHECK(relative_error(fused, ref) < 2e-3);
        }
      }
    }
  }
}

TEST_CASE("randomized oracle equivalence volume") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    const int bits = (trial % 2) ? 4 : 2;
    const PackLayout layout = static_cast<PackLayout>(trial % 3);
    const int64_t out = 4 + static_cast<int64_t>(rng() % 28);
    const int64_t in = 16 + static_cast<int64_t>(rng() % 120);
    const int64_t gs = 8 + static_cast<int64_t>(rng() % 64);
    const LinearLayerPacked layer =
        make_layer(out, in, bits, gs, layout, QuantMode::Symmetric, rng(), trial % 2 == 0);
    const Tensor x = random_normal(2, in, rng());
    CHECK(relative_error(gemm_fused(layer, x), forward_reference(layer, x)) < 2e-3);
  }
}

TEST_CASE("gemm equals per-token gemv bit-exactly") {
  const LinearLayerPacked layer =
      make_layer(16, 64, 4, 32, PackLayout::Simd128, QuantMode::Symmetric, 7, true);
  const Tensor x = random_normal(8, 64, 8);
  const Tensor batched = gemm_fused(layer, x);
  for (int64_t t = 0; t < 8; ++t) {
    const std::vector<float> single = gemv_fused(layer, x.row(t));
    for (int64_t o = 0; o < 16; ++o) CHECK(batched.at(t, o) == single[o]);
  }
}

TEST_CASE("empty token batch produces an empty output") {
  const LinearLayerPacked layer =
      make_layer(8, 32, 4, 32, PackLayout::Linear, QuantMode::Symmetric, 9);
  const Tensor x({0, 32});
  const Tensor y = gemm_fused(layer, x);
  CHECK(y.shape == std::vector<int64_t>{0, 8});
  CHECK(y.data.empty());
}

TEST_CASE("fused path is deterministic across calls") {
  const LinearLayerPacked layer =
      make_layer(32, 128, 4, 128, PackLayout::Simd128, QuantMode::Symmetric, 10, true);
  const Tensor x = random_normal(4, 128, 11);
  const Tensor a = gemm_fused(layer, x);
  const Tensor b = gemm_fused(layer, x);
  CHECK(a.data == b.data);
}

TEST_CASE("workspace stays order-of-a-row, not order-of-the-matrix") {
  const LinearLayerPacked layer =
      make_layer(256, 512, 4, 128, PackLayout::Simd128, QuantMode::Symmetric, 12);
  const KernelWorkspace ws = KernelWorkspace::for_layer(layer);
  // One scaled activation row + one unpacked weight row.
  CHECK(ws.bytes() == 512 * 4 + layer.padded_cols * 4);
  CHECK(ws.bytes() <= layer.out_features * layer.group_size * 4);
  CHECK(ws.bytes() < layer.out_features * layer.in_features * 4 / 64);
}

TEST_CASE("awq scale vector is applied to incoming activations") {
  QuantConfig cfg;
  cfg.bits = 8;
  cfg.group_size = 16;
  const Tensor w = random_normal(8, 16, 13);
  std::vector<float> s(16, 2.0f);
  const GroupQuant gq = quantize_group_rtn(scale_columns(w, s), cfg);
  const LinearLayerPacked layer = pack_layer(gq, s, PackLayout::Linear);
  const Tensor x = random_normal(1, 16, 14);
  // With W pre-scaled by s and x divided by s inside the kernel, the result
  // approximates the unscaled product.
  const Tensor want = matmul(w, x);
  const Tensor got({1, 8}, gemv_fused(layer, x.row(0)));
  CHECK(relative_error(got, want) < 0.03);
}

TEST_CASE("shape mismatches are rejected") {
  const LinearLayerPacked layer =
      make_layer(8, 32, 4, 32, PackLayout::Linear, QuantMode::Symmetric, 15);
  std::vector<float> short_x(31, 0.0f);
  CHECK_THROWS_AS(gemv_fused(layer, short_x), ShapeError);
  const Tensor bad = random_normal(2, 16, 16);
  CHECK_THROWS_AS(gemm_fused(layer, bad), ShapeError);
}

TEST_CASE("bench record bookkeeping matches the closed forms") {
  const int64_t out = 256, in = 256, gs = 128;
  const LinearLayerPacked layer =
      make_layer(out, in, 4, gs, PackLayout::Simd128, QuantMode::Symmetric, 17);
  const BenchRecord rec = bench_kernel(layer, 1, 3);

  const int64_t groups = out * (in / gs);
  CHECK(rec.weight_bytes == out * in / 2 + groups * 2 + in * 2);
  CHECK(rec.fp32_equiv_bytes == out * in * 4);
  CHECK(rec.fp16_equiv_bytes == out * in * 2);
  CHECK(rec.activation_bytes == in * 4);
  CHECK(rec.output_bytes == out * 4);
  CHECK(rec.flops == doctest::Approx(2.0 * out * in));
  CHECK(rec.arithmetic_intensity ==
        doctest::Approx(rec.flops / static_cast<double>(rec.weight_bytes + rec.activation_bytes +
                                                        rec.output_bytes)));
  CHECK(rec.reduction_vs_fp32 ==
        doctest::Approx(static_cast<double>(rec.fp32_equiv_bytes) / rec.weight_bytes));
  CHECK(rec.fused_ms > 0.0);
  CHECK(rec.baseline_ms > 0.0);
}

TEST_CASE("bench rejects too few repeats") {
  const LinearLayerPacked layer =
      make_layer(8, 32, 4, 32, PackLayout::Linear, QuantMode::Symmetric, 18);
  CHECK_THROWS_AS(bench_kernel(layer, 1, 2), ValueError);
}

TEST_CASE("bench records serialize and parse back") {
  const LinearLayerPacked layer =
      make_layer(32, 64, 4, 32, PackLayout::Gpu8, QuantMode::Symmetric, 19);
  const BenchRecord rec = bench_kernel(layer, 2, 3);
  const BenchRecord back = BenchRecord::from_record(rec.to_record());
  CHECK(back.out_features == rec.out_features);
  CHECK(back.layout == rec.layout);
  CHECK(back.fused_ms == rec.fused_ms);
  CHECK(back.weight_bytes == rec.weight_bytes);
  CHECK(back.gbps == rec.gbps);
  CHECK(back.machine == rec.machine);
}

TEST_CASE("concurrent forwards from separate threads match the serial result") {
  const LinearLayerPacked layer =
      make_layer(64, 256, 4, 128, PackLayout::Simd128, QuantMode::Symmetric, 23, true);
  const Tensor x = random_normal(16, 256, 24);
  const Tensor serial = gemm_fused(layer, x);

  Tensor parallel({16, 64});
  parallel_for(16, 4, [&](int64_t t) {
    KernelWorkspace ws = KernelWorkspace::for_layer(layer);
    gemv_fused(layer, x.row(t), std::span<float>(parallel.data.data() + t * 64, 64), ws);
  });
  CHECK(parallel.data == serial.data);
}

TEST_CASE("packed layers survive fp16 scale storage within kernel tolerance") {
  // Scales round to fp16 when packing; the fused result must stay within the
  // contract tolerance of a full fp32 dequantize + matmul.
  QuantConfig cfg;
  cfg.bits = 4;
  cfg.group_size = 32;
  const Tensor w = random_normal(32, 96, 20);
  const GroupQuant gq = quantize_group_rtn(w, cfg);
  const LinearLayerPacked layer = pack_layer(gq, {}, PackLayout::Simd128);
  const Tensor x = random_normal(4, 96, 21);
  const Tensor exact = matmul(dequantize(gq), x);
  CHECK(relative_error(gemm_fused(layer, x), exact) < 2e-3);
}
