// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "awqkit/pack.hpp"
#include "awqkit/quant.hpp"

namespace awqkit {

// Parsed command-line configuration. validate() runs before any file is
// touched and rejects invalid combinations with actionable messages.
struct CliConfig {
  std::string subcommand;
  std::string model_path;
  std::string calib_path;
  std::string quantized_path;  // eval: checkpoint under test
  std::string out_path;
  int bits = 4;
  int64_t group_size = 128;
  QuantMode mode = QuantMode::Symmetric;
  std::string method = "awq";  // rtn | awq | mixed-fp16 (analysis only)
  PackLayout layout = PackLayout::Simd128;
  int alpha_grid_size = 20;
  std::vector<float> clip_grid = default_clip_grid();
  uint64_t seed = 0;
  std::string report = "text";  // text | structured
  int repeats = 5;
  int64_t tokens = 1;
  // gen:
  int64_t dim = 256;
  int64_t n_blocks = 4;

  void validate() const;
  QuantConfig quant_config() const;  // method=rtn degenerates the grids
};

// Subcommands. Each returns a process exit code; 0 means no error
// diagnostics were emitted. Worker count is capped by AWQKIT_THREADS.
int cmd_quantize(const CliConfig& cfg);
int cmd_analyze(const CliConfig& cfg);
int cmd_eval(const CliConfig& cfg);
int cmd_bench(const CliConfig& cfg);
int cmd_gen(const CliConfig& cfg);  // seeded test model + calibration files

}  // namespace awqkit
