// SPDX-License-Identifier: Apache-2.0
#include "awqkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace awqkit {

Tensor silu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data) v = v / (1.0f + std::exp(-v));
  return y;
}

TinyModel TinyModel::random(int64_t dim, int64_t n_blocks, uint64_t seed) {
  if (dim < 1 || n_blocks < 1)
    throw ValueError("TinyModel needs dim >= 1 and n_blocks >= 1");
  TinyModel m;
  m.dim = dim;
  m.n_blocks = n_blocks;
  const int64_t hidden = 4 * dim;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);

  for (int64_t b = 0; b < n_blocks; ++b) {
    // fc1 rows carry log-normal gains so hidden channels differ in magnitude,
    // the shape real transformer activations have.
    Tensor w1({hidden, dim});
    const float base1 = 1.0f / std::sqrt(static_cast<float>(dim));
    for (int64_t r = 0; r < hidden; ++r) {
      const float gain = std::exp(0.5f * normal(rng));
      for (int64_t c = 0; c < dim; ++c) w1.at(r, c) = base1 * gain * normal(rng);
    }
    w1.check_finite("TinyModel fc1");
    m.fc1.push_back(std::move(w1));

    Tensor w2({dim, hidden});
    const float base2 = 0.5f / std::sqrt(static_cast<float>(hidden));
    for (auto& v : w2.data) v = base2 * normal(rng);
    w2.check_finite("TinyModel fc2");
    m.fc2.push_back(std::move(w2));
  }
  return m;
}

Tensor TinyModel::forward(const Tensor& x) const {
  Tensor stream = x;
  for (int64_t b = 0; b < n_blocks; ++b) {
    const Tensor h = silu(matmul(fc1[b], stream));
    stream = add(stream, matmul(fc2[b], h));
  }
  return stream;
}

std::vector<std::string> TinyModel::layer_names() const {
  std::vector<std::string> names;
  for (int64_t b = 0; b < n_blocks; ++b) {
    names.push_back("blocks." + std::to_string(b) + ".fc1.weight");
    names.push_back("blocks." + std::to_string(b) + ".fc2.weight");
  }
  return names;
}

const Tensor& TinyModel::layer(const std::string& name) const {
  for (int64_t b = 0; b < n_blocks; ++b) {
    if (name == "blocks." + std::to_string(b) + ".fc1.weight") return fc1[b];
    if (name == "blocks." + std::to_string(b) + ".fc2.weight") return fc2[b];
  }
  throw ValueError("model has no layer named '" + name + "'");
}

std::vector<std::pair<std::string, Tensor>> capture_layer_inputs(const TinyModel& model,
                                                                 const Tensor& x) {
  std::vector<std::pair<std::string, Tensor>> captured;
  Tensor stream = x;
  for (int64_t b = 0; b < model.n_blocks; ++b) {
    captured.emplace_back("blocks." + std::to_string(b) + ".fc1.weight", stream);
    const Tensor h = silu(matmul(model.fc1[b], stream));
    captured.emplace_back("blocks." + std::to_string(b) + ".fc2.weight", h);
    stream = add(stream, matmul(model.fc2[b], h));
  }
  return captured;
}

ModelFile to_model_file(const TinyModel& model) {
  ModelFile m;
  for (int64_t b = 0; b < model.n_blocks; ++b) {
    m.tensors.push_back(
        entry_from_tensor("blocks." + std::to_string(b) + ".fc1.weight", model.fc1[b]));
    m.tensors.push_back(
        entry_from_tensor("blocks." + std::to_string(b) + ".fc2.weight", model.fc2[b]));
  }
  return m;
}

TinyModel tiny_model_from_file(const ModelFile& m) {
  TinyModel model;
  model.fc1.clear();
  model.fc2.clear();
  int64_t b = 0;
  for (;; ++b) {
    const TensorEntry* e1 = m.find("blocks." + std::to_string(b) + ".fc1.weight");
    const TensorEntry* e2 = m.find("blocks." + std::to_string(b) + ".fc2.weight");
    if (!e1 && !e2) break;
    if (!e1 || !e2)
      throw CheckpointError(CheckpointError::Code::NameMismatch,
                            "block " + std::to_string(b) + " is missing one of its layers");
    if (e1->dtype != TensorDType::F32 || e2->dtype != TensorDType::F32)
      throw CheckpointError(CheckpointError::Code::BadField,
                            "tiny_model_from_file expects full-precision tensors");
    model.fc1.push_back(e1->f32);
    model.fc2.push_back(e2->f32);
  }
  if (b == 0)
    throw CheckpointError(CheckpointError::Code::NameMismatch,
                          "checkpoint holds no blocks.<n>.fc{1,2}.weight tensors");
  model.n_blocks = b;
  model.dim = model.fc1[0].cols();
  return model;
}

Tensor ModelLayer::forward(const Tensor& x) const {
  return is_quantized ? gemm_fused(packed, x) : matmul(dense, x);
}

int64_t ModelLayer::out_features() const {
  return is_quantized ? packed.out_features : dense.rows();
}

int64_t ModelLayer::in_features() const {
  return is_quantized ? packed.in_features : dense.cols();
}

Tensor QuantizedModel::forward(const Tensor& x) const {
  Tensor stream = x;
  for (size_t i = 0; i + 1 < layers.size(); i += 2) {
    const Tensor h = silu(layers[i].forward(stream));
    stream = add(stream, layers[i + 1].forward(h));
  }
  return stream;
}

QuantizedModel model_from_file(const ModelFile& m) {
  QuantizedModel model;
  int64_t b = 0;
  for (;; ++b) {
    const TensorEntry* e1 = m.find("blocks." + std::to_string(b) + ".fc1.weight");
    const TensorEntry* e2 = m.find("blocks." + std::to_string(b) + ".fc2.weight");
    if (!e1 && !e2) break;
    if (!e1 || !e2)
      throw CheckpointError(CheckpointError::Code::NameMismatch,
                            "block " + std::to_string(b) + " is missing one of its layers");
    for (const TensorEntry* e : {e1, e2}) {
      ModelLayer layer;
      layer.name = e->name;
      if (e->dtype == TensorDType::PackedInt) {
        layer.is_quantized = true;
        layer.packed = layer_from_entry(*e);
      } else {
        layer.dense = e->f32;
      }
      model.layers.push_back(std::move(layer));
    }
  }
  if (b == 0)
    throw CheckpointError(CheckpointError::Code::NameMismatch,
                          "checkpoint holds no blocks.<n>.fc{1,2}.weight tensors");
  model.n_blocks = b;
  model.dim = model.layers[0].in_features();
  return model;
}

Tensor synthetic_embeddings(int64_t tokens, int64_t dim, uint64_t seed, float tail_sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> channel_scale(static_cast<size_t>(dim));
  for (auto& s : channel_scale) s = std::exp(tail_sigma * normal(rng));
  Tensor x({tokens, dim});
  for (int64_t t = 0; t < tokens; ++t)
    for (int64_t c = 0; c < dim; ++c) x.at(t, c) = channel_scale[c] * normal(rng);
  x.check_finite("synthetic_embeddings");
  return x;
}

}  // namespace awqkit
