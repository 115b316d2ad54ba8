// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "awqkit/checkpoint.hpp"

namespace awqkit {

// Residual MLP stack used for end-to-end testing: every block computes
// x + fc2(silu(fc1(x))) on a [tokens, dim] stream. No attention, no
// embedding table; inputs are provided directly.
struct TinyModel {
  int64_t dim = 256;
  int64_t n_blocks = 4;
  std::vector<Tensor> fc1;  // [4*dim, dim]
  std::vector<Tensor> fc2;  // [dim, 4*dim]

  static TinyModel random(int64_t dim, int64_t n_blocks, uint64_t seed);

  Tensor forward(const Tensor& x) const;

  // Layer names in model order: blocks.<b>.fc1.weight, blocks.<b>.fc2.weight.
  std::vector<std::string> layer_names() const;
  const Tensor& layer(const std::string& name) const;
};

Tensor silu(const Tensor& x);

// Runs the model and records the input activations each linear layer saw,
// keyed by layer name. This is how calibration files are produced.
std::vector<std::pair<std::string, Tensor>> capture_layer_inputs(const TinyModel& model,
                                                                 const Tensor& x);

ModelFile to_model_file(const TinyModel& model);
TinyModel tiny_model_from_file(const ModelFile& m);

// Inference-side model: each layer is either a packed quantized linear or a
// full-precision passthrough, so partially quantized checkpoints run as-is.
struct ModelLayer {
  std::string name;
  bool is_quantized = false;
  LinearLayerPacked packed;
  Tensor dense;

  Tensor forward(const Tensor& x) const;
  int64_t out_features() const;
  int64_t in_features() const;
};

struct QuantizedModel {
  int64_t dim = 0;
  int64_t n_blocks = 0;
  std::vector<ModelLayer> layers;  // model order: b0.fc1, b0.fc2, b1.fc1, ...

  Tensor forward(const Tensor& x) const;
};

QuantizedModel model_from_file(const ModelFile& m);

// Gaussian token embeddings with per-channel log-normal magnitudes, the
// heavy-tailed activation profile the search needs something to bite on.
Tensor synthetic_embeddings(int64_t tokens, int64_t dim, uint64_t seed, float tail_sigma = 1.5f);

}  // namespace awqkit
