// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "awqkit/kernels.hpp"
#include "awqkit/tensor.hpp"

namespace awqkit {

// On-disk container for named tensors, full precision or packed. All integers
// little-endian, sections 8-byte aligned, CRC-32 per tensor section. Field
// layout is documented byte-by-byte in docs/format.md.
inline constexpr char kFormatMagic[8] = {'A', 'W', 'Q', 'K', 'I', 'T', 'F', '1'};
inline constexpr uint32_t kFormatVersion = 1;

class CheckpointError : public Error {
public:
  enum class Code {
    Io = 1,
    BadMagic = 2,
    BadVersion = 3,
    Truncated = 4,
    CrcMismatch = 5,
    Empty = 6,
    NameMismatch = 7,
    BadField = 8,
  };

  CheckpointError(Code code_, const std::string& msg) : Error(msg), code(code_) {}
  Code code;
};

enum class TensorDType : uint8_t { F32 = 0, PackedInt = 1 };

struct QuantizedTensorData {
  PackedWeights packed;             // row-padded payload, rows * padded_cols elements
  std::vector<uint16_t> scales;     // fp16 bits
  std::vector<int32_t> zeros;       // asymmetric only
  std::vector<uint16_t> awq_scale;  // fp16 bits, per input channel
  int64_t group_size = 0;
  QuantMode mode = QuantMode::Symmetric;
};

struct TensorEntry {
  std::string name;
  TensorDType dtype = TensorDType::F32;
  std::vector<int64_t> shape;  // logical shape; padding is payload-internal
  Tensor f32;                  // dtype == F32
  QuantizedTensorData qdata;   // dtype == PackedInt
};

struct ModelFile {
  uint32_t version = kFormatVersion;
  std::vector<TensorEntry> tensors;

  const TensorEntry* find(const std::string& name) const;
};

void save_model(const ModelFile& m, const std::string& path);
ModelFile load_model(const std::string& path);

// In-memory (de)serialization used by save/load and the determinism tests.
std::vector<uint8_t> serialize_model(const ModelFile& m);
ModelFile deserialize_model(const std::vector<uint8_t>& bytes);

TensorEntry entry_from_tensor(const std::string& name, const Tensor& t);
TensorEntry entry_from_layer(const std::string& name, const LinearLayerPacked& layer);
LinearLayerPacked layer_from_entry(const TensorEntry& e);

// Calibration files are the same container holding one fp32 activation matrix
// per layer name; lookups are name-keyed so entry order is irrelevant.
struct CalibrationSet {
  std::vector<std::pair<std::string, Tensor>> entries;

  const Tensor* find(const std::string& name) const;
};

CalibrationSet load_calibration(const std::string& path);
void save_calibration(const CalibrationSet& calib, const std::string& path);

// Closed-form size of a quantized checkpoint, used to report and check the
// compression ratio.
int64_t serialized_size(const ModelFile& m);

}  // namespace awqkit
