// SPDX-License-Identifier: Apache-2.0
//
// awqkit: weight-only low-bit quantization toolkit and micro inference
// engine. Subcommands: quantize, analyze, eval, bench, gen.

#include <string>

#include <CLI11.hpp>

#include "awqkit/cli.hpp"

using awqkit::CliConfig;

namespace {

void add_quant_flags(CLI::App* app, CliConfig& cfg) {
  app->add_option("--bits", cfg.bits, "quantization bit width (2|3|4|8)");
  app->add_option("--group-size", cfg.group_size, "elements sharing one scale");
  app->add_option_function<std::string>(
         "--mode", [&cfg](const std::string& v) { cfg.mode = awqkit::quant_mode_from_name(v); },
         "symmetric|asymmetric")
      ->default_str("symmetric");
  app->add_option("--method", cfg.method, "rtn|awq|mixed-fp16");
  app->add_option("--alpha-grid", cfg.alpha_grid_size, "scale search grid size");
  app->add_option("--clip-grid", cfg.clip_grid, "max-shrink ratios to search")
      ->delimiter(',');
  app->add_option_function<std::string>(
         "--layout",
         [&cfg](const std::string& v) { cfg.layout = awqkit::pack_layout_from_name(v); },
         "linear|simd128|gpu8")
      ->default_str("simd128");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"awqkit: activation-aware weight quantization toolkit"};
  app.require_subcommand(1);
  app.footer("AWQKIT_THREADS caps the per-layer worker pool.");

  CliConfig cfg;

  CLI::App* quantize = app.add_subcommand("quantize", "quantize a checkpoint against calibration data");
  quantize->add_option("--model", cfg.model_path, "fp32 model checkpoint")->required();
  quantize->add_option("--calib", cfg.calib_path, "calibration activations")->required();
  quantize->add_option("--out", cfg.out_path, "output checkpoint path")->required();
  add_quant_flags(quantize, cfg);
  quantize->add_option("--seed", cfg.seed, "seed for seeded analyses");
  quantize->add_option("--report", cfg.report, "text|structured");

  CLI::App* analyze = app.add_subcommand("analyze", "saliency protection and scaling statistics");
  analyze->add_option("--model", cfg.model_path, "fp32 model checkpoint")->required();
  analyze->add_option("--calib", cfg.calib_path, "calibration activations")->required();
  add_quant_flags(analyze, cfg);
  analyze->add_option("--seed", cfg.seed, "seed for the random criterion");
  analyze->add_option("--report", cfg.report, "text|structured");

  CLI::App* eval = app.add_subcommand("eval", "compare a quantized checkpoint against fp32");
  eval->add_option("--model", cfg.model_path, "fp32 model checkpoint")->required();
  eval->add_option("--quantized", cfg.quantized_path, "quantized checkpoint")->required();
  eval->add_option("--calib", cfg.calib_path, "optional calibration file for overfit check");
  eval->add_option("--seed", cfg.seed, "held-out input seed");
  CLI::Option* eval_tokens = eval->add_option("--tokens", cfg.tokens, "held-out token count");
  eval->add_option("--report", cfg.report, "text|structured");

  CLI::App* bench = app.add_subcommand("bench", "fused kernel micro-benchmarks");
  add_quant_flags(bench, cfg);
  bench->add_option("--tokens", cfg.tokens, "tokens per forward");
  bench->add_option("--repeats", cfg.repeats, "timing repetitions (median reported)");
  bench->add_option("--seed", cfg.seed, "weight generator seed");
  bench->add_option("--report", cfg.report, "text|structured");

  CLI::App* gen = app.add_subcommand("gen", "write a seeded test model and calibration set");
  gen->add_option("--model", cfg.model_path, "output model path")->required();
  gen->add_option("--calib", cfg.calib_path, "output calibration path")->required();
  gen->add_option("--dim", cfg.dim, "model width");
  gen->add_option("--blocks", cfg.n_blocks, "residual block count");
  CLI::Option* gen_tokens = gen->add_option("--tokens", cfg.tokens, "calibration token count");
  gen->add_option("--seed", cfg.seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  // Per-subcommand token defaults; the flag binds one shared field.
  if (eval->parsed() && !eval_tokens->count()) cfg.tokens = 64;
  if (gen->parsed() && !gen_tokens->count()) cfg.tokens = 128;

  if (quantize->parsed()) return awqkit::cmd_quantize(cfg);
  if (analyze->parsed()) return awqkit::cmd_analyze(cfg);
  if (eval->parsed()) return awqkit::cmd_eval(cfg);
  if (bench->parsed()) return awqkit::cmd_bench(cfg);
  if (gen->parsed()) return awqkit::cmd_gen(cfg);
  return 1;
}
