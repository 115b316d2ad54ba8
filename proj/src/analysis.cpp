// SPDX-License-Identifier: Apache-2.0
#include "awqkit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace awqkit {

using nlohmann::json;

CalibStats collect_calib_stats(const Tensor& x) {
  if (x.shape.size() != 2 || x.rows() < 1)
    throw ValueError("calibration set must be a non-empty [tokens, channels] tensor, got shape " +
                     shape_str(x.shape));
  const int64_t tokens = x.rows(), channels = x.cols();
  std::vector<double> acc(static_cast<size_t>(channels), 0.0);
  for (int64_t t = 0; t < tokens; ++t) {
    const float* p = x.data.data() + t * channels;
    for (int64_t c = 0; c < channels; ++c) acc[c] += std::fabs(p[c]);
  }
  CalibStats stats;
  stats.per_channel_mag.resize(static_cast<size_t>(channels));
  for (int64_t c = 0; c < channels; ++c)
    stats.per_channel_mag[c] = static_cast<float>(acc[c] / static_cast<double>(tokens));
  stats.activations = x;
  stats.token_count = tokens;
  return stats;
}

const char* saliency_criterion_name(SaliencyCriterion c) {
  switch (c) {
    case SaliencyCriterion::Activation: return "activation";
    case SaliencyCriterion::WeightNorm: return "weight_norm";
    case SaliencyCriterion::Random: return "random";
  }
  return "?";
}

namespace {

std::vector<int64_t> top_k_by_score(const std::vector<float>& score, int64_t k) {
  std::vector<int64_t> idx(score.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int64_t a, int64_t b) { return score[a] > score[b]; });
  idx.resize(static_cast<size_t>(std::min<int64_t>(k, static_cast<int64_t>(score.size()))));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::vector<int64_t> select_channels(SaliencyCriterion criterion, const Tensor& w,
                                     const std::vector<float>& per_channel_mag, double fraction,
                                     uint64_t seed) {
  const int64_t n = w.cols();
  const int64_t k = std::clamp<int64_t>(std::llround(fraction * static_cast<double>(n)), 0, n);
  if (k == 0) return {};
  switch (criterion) {
    case SaliencyCriterion::Activation:
      return top_k_by_score(per_channel_mag, k);
    case SaliencyCriterion::WeightNorm:
      return top_k_by_score(column_norms(w), k);
    case SaliencyCriterion::Random: {
      std::vector<int64_t> idx(static_cast<size_t>(n));
      std::iota(idx.begin(), idx.end(), 0);
      std::mt19937_64 rng(seed);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<size_t>(k));
      std::sort(idx.begin(), idx.end());
      return idx;
    }
  }
  return {};
}

SaliencyReport mixed_precision_eval(const Tensor& w, const Tensor& x, const QuantConfig& cfg,
                                    SaliencyCriterion criterion, double fraction, uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw ValueError("protected fraction " + std::to_string(fraction) + " outside [0, 1]");
  const CalibStats stats = collect_calib_stats(x);

  SaliencyReport rep;
  rep.criterion = criterion;
  rep.protected_fraction = fraction;
  rep.seed = seed;
  rep.protected_channels = select_channels(criterion, w, stats.per_channel_mag, fraction, seed);
  rep.degenerate = rep.protected_channels.empty() && fraction > 0.0;

  const Tensor y_ref = matmul(w, x);
  Tensor w_hat = dequantize(quantize_group_rtn(w, cfg));
  rep.layer_error_rtn = frobenius_norm(sub(matmul(w_hat, x), y_ref));

  // Protected columns revert to full precision after the usual group pass.
  for (int64_t c : rep.protected_channels)
    for (int64_t r = 0; r < w.rows(); ++r) w_hat.at(r, c) = w.at(r, c);
  rep.layer_error_protected = frobenius_norm(sub(matmul(w_hat, x), y_ref));
  return rep;
}

ScaleStats scale_salient_stats(const Tensor& w, const Tensor& x, const QuantConfig& cfg,
                               double salient_fraction, double s) {
  if (s < 1.0) throw ValueError("salient scale s must be >= 1, got " + std::to_string(s));
  const CalibStats stats = collect_calib_stats(x);
  const std::vector<int64_t> salient =
      select_channels(SaliencyCriterion::Activation, w, stats.per_channel_mag, salient_fraction, 0);

  std::vector<float> col_scale(static_cast<size_t>(w.cols()), 1.0f);
  for (int64_t c : salient) col_scale[c] = static_cast<float>(s);

  const GroupQuant base = quantize_group_rtn(w, cfg);
  const Tensor w_scaled = scale_columns(w, col_scale);
  const GroupQuant scaled = quantize_group_rtn(w_scaled, cfg);

  // Column groups that contain at least one salient channel.
  const int64_t gpr = base.groups_per_row();
  std::vector<char> group_has_salient(static_cast<size_t>(gpr), 0);
  for (int64_t c : salient) group_has_salient[c / cfg.group_size] = 1;

  int64_t changed = 0, changed_salient = 0, total_salient = 0;
  double sum_ratio = 0.0, sum_err_ratio = 0.0;
  const int64_t total = static_cast<int64_t>(base.scales.size());
  for (int64_t r = 0; r < base.rows; ++r) {
    for (int64_t g = 0; g < gpr; ++g) {
      const int64_t gi = r * gpr + g;
      const double ratio = static_cast<double>(scaled.scales[gi]) / base.scales[gi];
      sum_ratio += ratio;
      const bool differs = scaled.scales[gi] != base.scales[gi];
      changed += differs;
      if (group_has_salient[g]) {
        ++total_salient;
        changed_salient += differs;
        sum_err_ratio += ratio / s;
      }
    }
  }

  ScaleStats st;
  st.s = s;
  st.salient_fraction = salient_fraction;
  st.frac_delta_changed = total > 0 ? static_cast<double>(changed) / total : 0.0;
  st.frac_delta_changed_salient =
      total_salient > 0 ? static_cast<double>(changed_salient) / total_salient : 0.0;
  st.mean_delta_ratio = total > 0 ? sum_ratio / total : 1.0;
  st.mean_error_ratio = total_salient > 0 ? sum_err_ratio / total_salient : 1.0;

  const Tensor x_scaled = scale_columns_recip(x, col_scale);
  st.layer_error = frobenius_norm(sub(matmul(dequantize(scaled), x_scaled), matmul(w, x)));
  return st;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

std::string SaliencyReport::to_text() const {
  std::ostringstream os;
  os << "criterion=" << saliency_criterion_name(criterion) << " fraction=" << protected_fraction
     << " protected=" << protected_channels.size() << " err_protected=" << layer_error_protected
     << " err_rtn=" << layer_error_rtn;
  if (criterion == SaliencyCriterion::Random) os << " seed=" << seed;
  if (degenerate) os << " [degenerate: no channels selected]";
  return os.str();
}

std::string SaliencyReport::to_record() const {
  json j{{"record", "saliency"},
         {"criterion", saliency_criterion_name(criterion)},
         {"fraction", protected_fraction},
         {"protected_channels", protected_channels},
         {"layer_error_protected", layer_error_protected},
         {"layer_error_rtn", layer_error_rtn},
         {"seed", seed},
         {"degenerate", degenerate}};
  return j.dump();
}

SaliencyReport SaliencyReport::from_record(const std::string& line) {
  const json j = json::parse(line);
  SaliencyReport rep;
  const std::string crit = j.at("criterion").get<std::string>();
  if (crit == "activation") rep.criterion = SaliencyCriterion::Activation;
  else if (crit == "weight_norm") rep.criterion = SaliencyCriterion::WeightNorm;
  else if (crit == "random") rep.criterion = SaliencyCriterion::Random;
  else throw ValueError("unknown saliency criterion '" + crit + "'");
  rep.protected_fraction = j.at("fraction").get<double>();
  rep.protected_channels = j.at("protected_channels").get<std::vector<int64_t>>();
  rep.layer_error_protected = j.at("layer_error_protected").get<double>();
  rep.layer_error_rtn = j.at("layer_error_rtn").get<double>();
  rep.seed = j.at("seed").get<uint64_t>();
  rep.degenerate = j.at("degenerate").get<bool>();
  return rep;
}

std::string ScaleStats::to_text() const {
  std::ostringstream os;
  os << "s=" << s << " frac_delta_changed=" << frac_delta_changed
     << " (salient groups: " << frac_delta_changed_salient << ")"
     << " mean_delta_ratio=" << mean_delta_ratio << " mean_error_ratio=" << mean_error_ratio
     << " layer_error=" << layer_error;
  return os.str();
}

std::string ScaleStats::to_record() const {
  json j{{"record", "scale_stats"},
         {"s", s},
         {"salient_fraction", salient_fraction},
         {"frac_delta_changed", frac_delta_changed},
         {"frac_delta_changed_salient", frac_delta_changed_salient},
         {"mean_delta_ratio", mean_delta_ratio},
         {"mean_error_ratio", mean_error_ratio},
         {"layer_error", layer_error}};
  return j.dump();
}

ScaleStats ScaleStats::from_record(const std::string& line) {
  const json j = json::parse(line);
  ScaleStats st;
  st.s = j.at("s").get<double>();
  st.salient_fraction = j.at("salient_fraction").get<double>();
  st.frac_delta_changed = j.at("frac_delta_changed").get<double>();
  st.frac_delta_changed_salient = j.at("frac_delta_changed_salient").get<double>();
  st.mean_delta_ratio = j.at("mean_delta_ratio").get<double>();
  st.mean_error_ratio = j.at("mean_error_ratio").get<double>();
  st.layer_error = j.at("layer_error").get<double>();
  return st;
}

}  // namespace awqkit
