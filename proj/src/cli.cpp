// SPDX-License-Identifier: Apache-2.0
#include "awqkit/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "awqkit/analysis.hpp"
#include "awqkit/awq.hpp"
#include "awqkit/checkpoint.hpp"
#include "awqkit/kernels.hpp"
#include "awqkit/model.hpp"

namespace awqkit {

using nlohmann::json;

void CliConfig::validate() const {
  QuantConfig qc;
  qc.bits = bits;
  qc.group_size = group_size;
  qc.mode = mode;
  qc.clip_grid = clip_grid;
  qc.alpha_grid_size = alpha_grid_size;
  qc.validate();

  if (!pack_layout_supported(layout, bits))
    throw ValueError(std::string("layout ") + pack_layout_name(layout) +
                     " is undefined for bits=" + std::to_string(bits) +
                     "; use --layout linear");
  if (method != "rtn" && method != "awq" && method != "mixed-fp16")
    throw ValueError("unknown method '" + method + "' (rtn|awq|mixed-fp16)");
  if (report != "text" && report != "structured")
    throw ValueError("unknown report format '" + report + "' (text|structured)");
  if (repeats < 3) throw ValueError("--repeats must be >= 3");
  if (tokens < 1) throw ValueError("--tokens must be >= 1");
}

QuantConfig CliConfig::quant_config() const {
  QuantConfig qc;
  qc.bits = bits;
  qc.group_size = group_size;
  qc.mode = mode;
  if (method == "rtn") {
    qc.alpha_grid_size = 1;    // grid {0}: no scaling
    qc.clip_grid = {1.0f};     // no clipping
  } else {
    qc.clip_grid = clip_grid;
    qc.alpha_grid_size = alpha_grid_size;
  }
  return qc;
}

namespace {

int fail(const std::string& msg) {
  std::cerr << "error: " << msg << "\n";
  return 1;
}

struct LayerJob {
  std::string name;
  const Tensor* weight = nullptr;
  const Tensor* activations = nullptr;
};

// Full-precision 2-D entries are the quantizable layers.
std::vector<LayerJob> collect_layers(const ModelFile& model, const CalibrationSet& calib) {
  std::vector<LayerJob> jobs;
  for (const auto& e : model.tensors) {
    if (e.dtype != TensorDType::F32 || e.shape.size() != 2) continue;
    const Tensor* x = calib.find(e.name);
    if (!x)
      throw CheckpointError(CheckpointError::Code::NameMismatch,
                            "calibration file has no activations for layer '" + e.name + "'");
    if (x->cols() != e.shape[1])
      throw ShapeError("calibration for '" + e.name + "' has " + std::to_string(x->cols()) +
                       " channels, layer expects " + std::to_string(e.shape[1]));
    jobs.push_back({e.name, &e.f32, x});
  }
  if (jobs.empty())
    throw CheckpointError(CheckpointError::Code::Empty, "model holds no quantizable layers");
  return jobs;
}

double mean_of(const std::vector<float>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

int cmd_quantize(const CliConfig& cfg) {
  try {
    cfg.validate();
    if (cfg.method == "mixed-fp16")
      return fail("mixed-fp16 protection is an analysis tool, not a storage format; "
                  "run `analyze` instead, or quantize with --method awq");
    if (cfg.model_path.empty() || cfg.calib_path.empty() || cfg.out_path.empty())
      return fail("quantize needs --model, --calib and --out");

    const ModelFile model = load_model(cfg.model_path);
    const CalibrationSet calib = load_calibration(cfg.calib_path);
    const std::vector<LayerJob> jobs = collect_layers(model, calib);
    const QuantConfig qc = cfg.quant_config();

    std::vector<QuantizedLayer> results(jobs.size());
    parallel_for(static_cast<int64_t>(jobs.size()), env_thread_count(), [&](int64_t i) {
      const CalibStats stats = collect_calib_stats(*jobs[i].activations);
      results[i] = quantize_layer_awq(*jobs[i].weight, stats, qc);
    });

    ModelFile out;
    for (size_t i = 0; i < jobs.size(); ++i)
      out.tensors.push_back(entry_from_layer(jobs[i].name, pack_layer(results[i], cfg.layout)));
    save_model(out, cfg.out_path);

    const double ratio = static_cast<double>(serialized_size(model)) /
                         static_cast<double>(serialized_size(out));
    if (cfg.report == "structured") {
      for (size_t i = 0; i < jobs.size(); ++i) {
        const QuantizedLayer& r = results[i];
        json j{{"record", "quantize"},        {"layer", jobs[i].name},
               {"rtn_loss", r.rtn_loss},      {"awq_loss", r.loss},
               {"alpha", r.alpha},            {"mean_clip", mean_of(r.clip_ratios)},
               {"zero_sx", r.zero_sx_warning}};
        std::cout << j.dump() << "\n";
      }
      std::cout << json{{"record", "quantize_summary"},
                        {"compression_ratio", ratio},
                        {"bits", cfg.bits},
                        {"group_size", cfg.group_size},
                        {"layout", pack_layout_name(cfg.layout)},
                        {"method", cfg.method}}
                       .dump()
                << "\n";
    } else {
      std::cout << "layer                        rtn_loss      awq_loss   alpha  mean_clip\n";
      for (size_t i = 0; i < jobs.size(); ++i) {
        const QuantizedLayer& r = results[i];
        std::ostringstream line;
        line << jobs[i].name;
        while (line.str().size() < 26) line << ' ';
        line << "  " << r.rtn_loss << "  " << r.loss << "  " << r.alpha << "  "
             << mean_of(r.clip_ratios);
        if (r.zero_sx_warning) line << "  [warning: all-zero activation stats]";
        std::cout << line.str() << "\n";
      }
      std::cout << "wrote " << cfg.out_path << " (int" << cfg.bits << "-g" << cfg.group_size
                << ", " << pack_layout_name(cfg.layout) << "), compression ratio " << ratio
                << "x vs fp32\n";
    }
    return 0;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

int cmd_analyze(const CliConfig& cfg) {
  try {
    cfg.validate();
    if (cfg.model_path.empty() || cfg.calib_path.empty())
      return fail("analyze needs --model and --calib");

    const ModelFile model = load_model(cfg.model_path);
    const CalibrationSet calib = load_calibration(cfg.calib_path);
    const std::vector<LayerJob> jobs = collect_layers(model, calib);
    const QuantConfig qc = cfg.quant_config();

    const std::vector<double> fractions = {0.001, 0.01, 0.03};
    const std::vector<double> s_grid = {1.0, 1.25, 1.5, 2.0, 4.0};
    const std::vector<SaliencyCriterion> criteria = {
        SaliencyCriterion::Activation, SaliencyCriterion::WeightNorm, SaliencyCriterion::Random};

    const bool structured = cfg.report == "structured";
    if (!structured) {
      std::cout << "protection fractions: 0.1% | 1% | 3%\n";
      std::cout << "scale sweep: s=1 | s=1.25 | s=1.5 | s=2 | s=4\n";
    }
    for (const auto& jb : jobs) {
      if (!structured) std::cout << "== " << jb.name << " ==\n";
      for (SaliencyCriterion crit : criteria) {
        for (double f : fractions) {
          const SaliencyReport rep =
              mixed_precision_eval(*jb.weight, *jb.activations, qc, crit, f, cfg.seed);
          if (structured) {
            json j = json::parse(rep.to_record());
            j["layer"] = jb.name;
            std::cout << j.dump() << "\n";
          } else {
            std::cout << "  " << rep.to_text() << "\n";
          }
        }
      }
      for (double s : s_grid) {
        const ScaleStats st = scale_salient_stats(*jb.weight, *jb.activations, qc, 0.01, s);
        if (structured) {
          json j = json::parse(st.to_record());
          j["layer"] = jb.name;
          std::cout << j.dump() << "\n";
        } else {
          std::cout << "  " << st.to_text() << "\n";
        }
      }
    }
    return 0;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

int cmd_eval(const CliConfig& cfg) {
  try {
    cfg.validate();
    if (cfg.model_path.empty() || cfg.quantized_path.empty())
      return fail("eval needs --model (fp checkpoint) and --quantized");

    const TinyModel fp = tiny_model_from_file(load_model(cfg.model_path));
    const QuantizedModel qm = model_from_file(load_model(cfg.quantized_path));

    const int64_t tokens = std::max<int64_t>(cfg.tokens, 1);
    const Tensor x = synthetic_embeddings(tokens, fp.dim, cfg.seed + 1);  // held out
    const Tensor y_fp = fp.forward(x);
    const Tensor y_q = qm.forward(x);
    const double rel = relative_error(y_q, y_fp);

    const bool structured = cfg.report == "structured";
    // Per-layer breakdown on the inputs each layer sees in the fp model.
    const auto captured = capture_layer_inputs(fp, x);
    std::vector<std::pair<std::string, double>> per_layer;
    for (size_t i = 0; i < captured.size() && i < qm.layers.size(); ++i) {
      const Tensor ref = matmul(fp.layer(captured[i].first), captured[i].second);
      const Tensor got = qm.layers[i].forward(captured[i].second);
      per_layer.emplace_back(captured[i].first, relative_error(got, ref));
    }

    double calib_rel = -1.0;
    if (!cfg.calib_path.empty()) {
      const CalibrationSet calib = load_calibration(cfg.calib_path);
      const Tensor* x_cal = calib.find("blocks.0.fc1.weight");
      if (!x_cal)
        throw CheckpointError(CheckpointError::Code::NameMismatch,
                              "calibration file lacks blocks.0.fc1.weight activations");
      calib_rel = relative_error(qm.forward(*x_cal), fp.forward(*x_cal));
    }

    if (structured) {
      for (const auto& [name, err] : per_layer)
        std::cout << json{{"record", "eval_layer"}, {"layer", name}, {"relative_error", err}}.dump()
                  << "\n";
      json j{{"record", "eval"},
             {"relative_error", rel},
             {"tokens", tokens},
             {"seed", cfg.seed}};
      if (calib_rel >= 0) j["calibration_relative_error"] = calib_rel;
      std::cout << j.dump() << "\n";
    } else {
      for (const auto& [name, err] : per_layer)
        std::cout << "  " << name << ": relative error " << err << "\n";
      std::cout << "model output relative error (held-out, " << tokens << " tokens): " << rel
                << "\n";
      if (calib_rel >= 0)
        std::cout << "model output relative error (calibration inputs): " << calib_rel << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

int cmd_bench(const CliConfig& cfg) {
  try {
    cfg.validate();
    const std::vector<int64_t> sizes = {1024, 2048, 4096};
    std::vector<PackLayout> layouts;
    for (PackLayout l : {PackLayout::Linear, PackLayout::Simd128, PackLayout::Gpu8})
      if (pack_layout_supported(l, cfg.bits)) layouts.push_back(l);

    const bool structured = cfg.report == "structured";
    if (!structured)
      std::cout << "kernel benchmarks, int" << cfg.bits << "-g" << cfg.group_size << ", tokens="
                << cfg.tokens << ", repeats=" << cfg.repeats << " (median)\n";

    QuantConfig qc = cfg.quant_config();
    for (int64_t n : sizes) {
      const Tensor w = random_normal(n, n, cfg.seed + static_cast<uint64_t>(n), 1.0f);
      const GroupQuant gq = quantize_group_rtn(w, qc);
      for (PackLayout layout : layouts) {
        const LinearLayerPacked layer = pack_layer(gq, {}, layout);
        const BenchRecord rec = bench_kernel(layer, cfg.tokens, cfg.repeats);
        std::cout << (structured ? rec.to_record() : "  " + rec.to_text()) << "\n";
      }
    }

    // Traffic breakdown at the configured token count: stored weight bytes
    // against activation bytes per forward pass.
    if (!structured) std::cout << "traffic breakdown (weight vs activation bytes)\n";
    for (int64_t n : sizes) {
      const double wb = static_cast<double>(n) * static_cast<double>(n) * cfg.bits / 8.0 +
                        static_cast<double>(n) * ceil_div(n, cfg.group_size) * 2.0 +
                        static_cast<double>(n) * 2.0;
      const double ab = static_cast<double>(cfg.tokens) * static_cast<double>(n) * 4.0;
      if (structured) {
        std::cout << json{{"record", "traffic"},
                          {"size", n},
                          {"tokens", cfg.tokens},
                          {"weight_bytes", wb},
                          {"activation_bytes", ab},
                          {"weight_to_activation", wb / ab}}
                         .dump()
                  << "\n";
      } else {
        std::cout << "  " << n << "x" << n << ": weights " << wb << " B, activations " << ab
                  << " B, ratio " << wb / ab << "\n";
      }
    }
    return 0;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

int cmd_gen(const CliConfig& cfg) {
  try {
    cfg.validate();
    if (cfg.model_path.empty() || cfg.calib_path.empty())
      return fail("gen needs --model and --calib output paths");

    const TinyModel model = TinyModel::random(cfg.dim, cfg.n_blocks, cfg.seed);
    save_model(to_model_file(model), cfg.model_path);

    const int64_t tokens = std::max<int64_t>(cfg.tokens, 16);
    const Tensor x = synthetic_embeddings(tokens, cfg.dim, cfg.seed);
    CalibrationSet calib;
    calib.entries = capture_layer_inputs(model, x);
    save_calibration(calib, cfg.calib_path);

    std::cout << "wrote " << cfg.model_path << " (" << cfg.n_blocks << " blocks, dim " << cfg.dim
              << ") and " << cfg.calib_path << " (" << tokens << " calibration tokens)\n";
    return 0;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

}  // namespace awqkit
