// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "awqkit/awq.hpp"
#include "test_util.hpp"

using namespace awqkit;

namespace {

// Compose-then-norm pipeline written out independently: scale columns, group
// quantize scalar-style, dequantize, matmul against the inversely scaled
// activations, subtract the fp product, Frobenius norm.
double awq_loss_oracle(const Tensor& w, const Tensor& x, const std::vector<float>& s, int bits,
                       int64_t group_size) {
  const int64_t rows = w.rows(), cols = w.cols(), tokens = x.rows();
  std::vector<float> ws(w.data.size());
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) ws[r * cols + c] = w.at(r, c) * s[c];

  std::vector<float> w_hat(ws.size());
  const float half = static_cast<float>(1 << (bits - 1));
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t g0 = 0; g0 < cols; g0 += group_size) {
      const int64_t g1 = std::min(cols, g0 + group_size);
      float absmax = 0.0f;
      for (int64_t c = g0; c < g1; ++c) absmax = std::max(absmax, std::fabs(ws[r * cols + c]));
      const float delta = absmax == 0.0f ? 1.0f : absmax / half;
      for (int64_t c = g0; c < g1; ++c) {
        const long q = std::clamp(std::lround(ws[r * cols + c] / delta),
                                  -static_cast<long>(half), static_cast<long>(half) - 1);
        w_hat[r * cols + c] = delta * static_cast<float>(q);
      }
    }
  }

  double ss = 0.0;
  for (int64_t t = 0; t < tokens; ++t) {
    for (int64_t o = 0; o < rows; ++o) {
      float got = 0.0f, want = 0.0f;
      for (int64_t c = 0; c < cols; ++c) {
        got += w_hat[o * cols + c] * (x.at(t, c) / s[c]);
        want += w.at(o, c) * x.at(t, c);
      }
      ss += static_cast<double>(got - want) * static_cast<double>(got - want);
    }
  }
  return std::sqrt(ss);
}

CalibStats stats_of(const Tensor& x) { return collect_calib_stats(x); }

}  // namespace

TEST_CASE("awq loss with unit scales equals the rtn quantization error") {
  QuantConfig cfg;
  cfg.bits = 3;
  cfg.group_size = 32;
  const Tensor w = random_normal(32, 64, 1);
  const Tensor x = random_normal(8, 64, 2);
  const std::vector<float> ones(64, 1.0f);
  CHECK(awq_loss(w, x, ones, cfg) == quant_error(w, x, cfg));
}

TEST_CASE("awq loss vanishes without quantization error, shrinks with bits") {
  QuantConfig cfg;
  cfg.group_size = 4;
  // The symmetric step formula always clamps the group max by one level, so
  // the only inputs with exactly zero loss are all-zero groups; everything
  // else decays with bit width instead.
  cfg.bits = 8;
  const Tensor zero_w({2, 4});
  const Tensor x = random_normal(4, 4, 3);
  const std::vector<float> ones(4, 1.0f);
  CHECK(awq_loss(zero_w, x, ones, cfg) == 0.0);

  const Tensor w = random_normal(8, 4, 31);
  const double scale = frobenius_norm(matmul(w, x));
  CHECK(awq_loss(w, x, std::vector<float>(4, 1.0f), cfg) < 0.02 * scale);
}

TEST_CASE("awq loss matches the independent composition oracle") {
  QuantConfig cfg;
  cfg.bits = 4;
  cfg.group_size = 32;
  const Tensor w = random_normal(64, 128, 4);
  const Tensor x = testutil::heavy_tailed_activations(8, 128, 5);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> dist(0.5f, 2.0f);
  std::vector<float> s(128);
  for (auto& v : s) v = dist(rng);

  const double got = awq_loss(w, x, s, cfg);
  const double want = awq_loss_oracle(w, x, s, 4, 32);
  CHECK(testutil::rel_diff(got, want) < 1e-6);
}

TEST_CASE("non-positive scales are rejected with the channel index") {
  QuantConfig cfg;
  const Tensor w = random_normal(4, 8, 7);
  const Tensor x = random_normal(2, 8, 8);
  std::vector<float> s(8, 1.0f);
  s[3] = 0.0f;
  CHECK_THROWS_WITH_AS(awq_loss(w, x, s, cfg), doctest::Contains("channel 3"), ValueError);
}

TEST_CASE("search never loses to rtn and reports it") {
  QuantConfig cfg;
  cfg.bits = 3;
  cfg.group_size = 32;
  const Tensor w = random_normal(32, 64, 9);

  SUBCASE("constant activations") {
    Tensor x({8, 64});
    for (auto& v : x.data) v = 0.7f;
    const ScaleSearchResult res = search_scales(w, stats_of(x), cfg);
    CHECK(res.loss <= res.rtn_loss);
  }
  SUBCASE("salient activations choose a positive alpha") {
    const Tensor x = testutil::heavy_tailed_activations(16, 64, 10);
    const ScaleSearchResult res = search_scales(w, stats_of(x), cfg);
    CHECK(res.alpha > 0.0f);
    CHECK(res.loss < res.rtn_loss);
  }
}

TEST_CASE("all-zero activation stats return alpha 0 with a warning") {
  QuantConfig cfg;
  const Tensor w = random_normal(8, 16, 11);
  const Tensor x({4, 16});  // zeros
  const ScaleSearchResult res = search_scales(w, stats_of(x), cfg);
  CHECK(res.zero_sx_warning);
  CHECK(res.alpha == 0.0f);
  for (float v : res.s) CHECK(v == 1.0f);
}

TEST_CASE("zero activation channels get unit scale") {
  QuantConfig cfg;
  cfg.bits = 4;
  cfg.group_size = 8;
  const Tensor w = random_normal(8, 16, 12);
  Tensor x = random_normal(8, 16, 13);
  for (int64_t t = 0; t < 8; ++t) x.at(t, 5) = 0.0f;  // dead channel
  const ScaleSearchResult res = search_scales(w, stats_of(x), cfg);
  CHECK(res.s[5] == 1.0f);
}

TEST_CASE("grid search equals brute force on a tiny layer") {
  QuantConfig cfg;
  cfg.bits = 3;
  cfg.group_size = 8;
  cfg.alpha_grid_size = 20;
  const Tensor w = random_normal(8, 16, 14);
  const Tensor x = testutil::heavy_tailed_activations(4, 16, 15);
  const CalibStats stats = stats_of(x);

  // Independent loop over the same grid.
  float best_alpha = 0.0f;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int j = 0; j < 20; ++j) {
    const float alpha = static_cast<float>(j) / 19.0f;
    std::vector<float> s(16);
    for (int64_t c = 0; c < 16; ++c)
      s[c] = stats.per_channel_mag[c] > 0 ? std::pow(stats.per_channel_mag[c], alpha) : 1.0f;
    const double loss = awq_loss(w, x, s, cfg);
    if (loss < best_loss) {
      best_loss = loss;
      best_alpha = alpha;
    }
  }

  const ScaleSearchResult res = search_scales(w, stats, cfg);
  CHECK(res.alpha == best_alpha);
  CHECK(res.loss == best_loss);
}

TEST_CASE("chosen alpha is invariant to a uniform activation rescale") {
  QuantConfig cfg;
  cfg.bits = 3;
  cfg.group_size = 32;
  const Tensor w = random_normal(32, 64, 16);
  const Tensor x = testutil::heavy_tailed_activations(16, 64, 17);
  Tensor x3 = x;
  for (auto& v : x3.data) v *= 3.0f;

  const ScaleSearchResult a = search_scales(w, stats_of(x), cfg);
  const ScaleSearchResult b = search_scales(w, stats_of(x3), cfg);
  CHECK(a.alpha == b.alpha);
}

TEST_CASE("refining the grid never increases the achieved loss") {
  QuantConfig cfg;
  cfg.bits = 3;
  cfg.group_size = 32;
  const Tensor w = random_normal(32, 64, 18);
  const Tensor x = testutil::heavy_tailed_activations(16, 64, 19);
  const CalibStats stats = stats_of(x);

  // K -> 2K-1 halves the step and keeps every old grid point, so this holds
  // unconditionally; the endpoint-inclusive grid at plain 2K would not nest.
  for (int k : {5, 10, 20}) {
    cfg.alpha_grid_size = k;
    const double coarse = search_scales(w, stats, cfg).loss;
    cfg.alpha_grid_size = 2 * k - 1;
    const double fine = search_scales(w, stats, cfg).loss;
    CHECK(fine <= coarse);
  }
}

TEST_CASE("clip grid of exactly 1.0 reproduces plain rtn") {
  QuantConfig cfg;
  cfg.bits = 4;
  cfg.group_size = 32;
  cfg.clip_grid = {1.0f};
  const Tensor w = random_normal(16, 64, 20);
  const Tensor x = random_normal(8, 64, 21);
  const std::vector<float> clips = search_clip(w, x, cfg);
  for (float r : clips) CHECK(r == 1.0f);
  const GroupQuant clipped = quantize_group_rtn_clipped(w, cfg, clips);
  const GroupQuant plain = quantize_group_rtn(w, cfg);
  CHECK(clipped.qvals == plain.qvals);
  CHECK(clipped.scales == plain.scales);
}

TEST_CASE("an outlier weight pulls the chosen clip ratio below one") {
  QuantConfig cfg;
  cfg.bits = 4;
  cfg.group_size = 128;
  Tensor w = random_normal(1, 128, 22);
  w.data[7] = 5.0f;  // lone outlier above the natural Gaussian max
  const Tensor x = random_normal(64, 128, 122);

  const std::vector<float> clips = search_clip(w, x, cfg);
  CHECK(clips[0] < 1.0f);

  // Row error strictly better than unclipped.
  auto row_err = [&](float ratio) {
    const std::vector<float> rc(1, ratio);
    const Tensor w_hat = dequantize(quantize_group_rtn_clipped(w, cfg, rc));
    double ss = 0.0;
    for (int64_t t = 0; t < x.rows(); ++t) {
      float dot = 0.0f;
      for (int64_t c = 0; c < 128; ++c) dot += (w_hat.at(0, c) - w.at(0, c)) * x.at(t, c);
      ss += static_cast<double>(dot) * dot;
    }
    return ss;
  };
  CHECK(row_err(clips[0]) < row_err(1.0f));
}

TEST_CASE("an extreme outlier is left to the range, not clipped") {
  // Once the step is so large that every other element rounds to zero at
  // every grid ratio, their error no longer depends on the ratio and
  // shrinking the range can only hurt the outlier itself; 1.0 is optimal.
  QuantConfig cfg;
  cfg.bits = 4;
  cfg.group_size = 128;
  Tensor w = random_normal(1, 128, 22);
  w.data[7] = 100.0f;
  const Tensor x = random_normal(64, 128, 122);
  CHECK(search_clip(w, x, cfg)[0] == 1.0f);
}

TEST_CASE("clip search equals a per-row brute force over the grid") {
  QuantConfig cfg;
  cfg.bits = 4;
  cfg.group_size = 32;
  const Tensor w = random_normal(24, 64, 23);
  const Tensor x = testutil::heavy_tailed_activations(8, 64, 24);

  const std::vector<float> got = search_clip(w, x, cfg);

  for (int64_t r = 0; r < w.rows(); ++r) {
    float best_ratio = 0.0f;
    double best_err = std::numeric_limits<double>::infinity();
    for (float ratio : cfg.clip_grid) {
      const std::vector<float> rc(static_cast<size_t>(w.rows()), ratio);
      const Tensor w_hat = dequantize(quantize_group_rtn_clipped(w, cfg, rc));
      double ss = 0.0;
      for (int64_t t = 0; t < x.rows(); ++t) {
        float dot = 0.0f;
        for (int64_t c = 0; c < w.cols(); ++c)
          dot += (w_hat.at(r, c) - w.at(r, c)) * x.at(t, c);
        ss += static_cast<double>(dot) * dot;
      }
      if (ss < best_err) {
        best_err = ss;
        best_ratio = ratio;
      }
    }
    CHECK(got[r] == best_ratio);
  }
}

TEST_CASE("full layer pipeline beats rtn and is deterministic") {
  QuantConfig cfg;
  cfg.bits = 3;
  cfg.group_size = 128;
  const Tensor w = random_normal(128, 256, 25);
  const Tensor x = testutil::heavy_tailed_activations(32, 256, 26);
  const CalibStats stats = stats_of(x);

  const QuantizedLayer a = quantize_layer_awq(w, stats, cfg);
  CHECK(a.loss <= a.rtn_loss);
  CHECK(a.alpha > 0.0f);

  const QuantizedLayer b = quantize_layer_awq(w, stats, cfg);
  CHECK(a.gq.qvals == b.gq.qvals);
  CHECK(a.gq.scales == b.gq.scales);
  CHECK(a.s == b.s);
  CHECK(a.clip_ratios == b.clip_ratios);
  CHECK(a.loss == b.loss);

  // Replaying the stored pieces reproduces the recorded loss exactly.
  const double replay = frobenius_norm(
      sub(matmul(dequantize(a.gq), scale_columns_recip(x, a.s)), matmul(w, x)));
  CHECK(replay == a.loss);
}

TEST_CASE("awq layer loss stays within reach of oracle mixed-precision protection") {
  QuantConfig cfg;
  cfg.bits = 3;
  cfg.group_size = 128;
  const Tensor w = random_normal(256, 512, 27);
  const Tensor x = testutil::heavy_tailed_activations(32, 512, 28, 1.0f);

  const QuantizedLayer layer = quantize_layer_awq(w, collect_calib_stats(x), cfg);
  const SaliencyReport fp16 =
      mixed_precision_eval(w, x, cfg, SaliencyCriterion::Activation, 0.01);
  CHECK(layer.loss < layer.rtn_loss);
  CHECK(layer.loss <= 1.25 * fp16.layer_error_protected);
}

TEST_CASE("eight-bit no-op quantization reproduces the layer output almost exactly") {
  QuantConfig cfg;
  cfg.bits = 8;
  cfg.group_size = 32;
  cfg.alpha_grid_size = 1;
  const Tensor w = random_normal(16, 32, 29);
  const Tensor x = random_normal(8, 32, 30);
  const QuantizedLayer layer = quantize_layer_awq(w, collect_calib_stats(x), cfg);
  const double base = frobenius_norm(matmul(w, x));
  CHECK(layer.loss < 2e-2 * base);
}
