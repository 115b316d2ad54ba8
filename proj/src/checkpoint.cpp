// SPDX-License-Identifier: Apache-2.0
#include "awqkit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace awqkit {

namespace {

using Code = CheckpointError::Code;

// --- little-endian byte writer -------------------------------------------

struct Writer {
  std::vector<uint8_t>& out;

  void u8(uint8_t v) { out.push_back(v); }
  void u16(uint16_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void bytes(const uint8_t* p, size_t n) { out.insert(out.end(), p, p + n); }
  void pad_to(size_t align) {
    while (out.size() % align) out.push_back(0);
  }
};

// --- bounds-checked little-endian reader ----------------------------------

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;

  void need(uint64_t n) const {
    // Overflow-safe: compare against the bytes actually left.
    if (n > buf.size() - pos)
      throw CheckpointError(Code::Truncated, "checkpoint truncated at byte " + std::to_string(pos) +
                                                 " (need " + std::to_string(n) + " more)");
  }
  // Count fields are bounded by the remaining bytes before anything is
  // allocated, so corrupted lengths surface as truncation, not bad_alloc.
  void need_count(uint64_t count, uint64_t elem_size) const {
    if (count > (buf.size() - pos) / elem_size)
      throw CheckpointError(Code::Truncated,
                            "checkpoint truncated: count " + std::to_string(count) +
                                " exceeds remaining bytes at " + std::to_string(pos));
  }
  uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(buf[pos] | (buf[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
  void skip_pad(size_t align) {
    while (pos % align) {
      need(1);
      ++pos;
    }
  }
};

void append_section(Writer& w, const TensorEntry& e) {
  const size_t section_start = w.out.size();
  w.u32(static_cast<uint32_t>(e.name.size()));
  w.bytes(reinterpret_cast<const uint8_t*>(e.name.data()), e.name.size());
  w.u8(static_cast<uint8_t>(e.dtype));
  w.u8(static_cast<uint8_t>(e.shape.size()));
  for (int64_t d : e.shape) w.i64(d);

  if (e.dtype == TensorDType::F32) {
    w.u64(e.f32.data.size());
    for (float v : e.f32.data) w.f32(v);
  } else {
    const QuantizedTensorData& q = e.qdata;
    w.u8(static_cast<uint8_t>(q.packed.layout));
    w.u8(static_cast<uint8_t>(q.packed.bits));
    w.u8(static_cast<uint8_t>(q.mode));
    w.u8(q.packed.signed_vals ? 1 : 0);
    w.i64(q.group_size);
    w.u64(static_cast<uint64_t>(q.packed.logical_len));
    w.u64(q.scales.size());
    for (uint16_t v : q.scales) w.u16(v);
    w.u64(q.zeros.size());
    for (int32_t v : q.zeros) w.i32(v);
    w.u64(q.awq_scale.size());
    for (uint16_t v : q.awq_scale) w.u16(v);
    w.u64(q.packed.payload.size());
    w.bytes(q.packed.payload.data(), q.packed.payload.size());
  }

  w.u32(crc32(w.out.data() + section_start, w.out.size() - section_start));
  w.pad_to(8);
}

TensorEntry read_section(Reader& r) {
  const size_t section_start = r.pos;
  TensorEntry e;
  const uint32_t name_len = r.u32();
  r.need(name_len);
  e.name.assign(reinterpret_cast<const char*>(r.buf.data() + r.pos), name_len);
  r.pos += name_len;

  const uint8_t dtype = r.u8();
  if (dtype > 1)
    throw CheckpointError(Code::BadField, "unknown dtype " + std::to_string(dtype) +
                                              " for tensor '" + e.name + "'");
  e.dtype = static_cast<TensorDType>(dtype);
  const uint8_t ndim = r.u8();
  e.shape.resize(ndim);
  for (auto& d : e.shape) d = r.i64();

  if (e.dtype == TensorDType::F32) {
    const uint64_t count = r.u64();
    r.need_count(count, 4);
    std::vector<float> data(count);
    for (auto& v : data) v = r.f32();
    e.f32 = Tensor(e.shape, std::move(data));
    e.f32.check_finite(("tensor '" + e.name + "'").c_str());
  } else {
    QuantizedTensorData& q = e.qdata;
    const uint8_t layout = r.u8();
    if (layout > 2)
      throw CheckpointError(Code::BadField, "unknown layout tag " + std::to_string(layout));
    q.packed.layout = static_cast<PackLayout>(layout);
    q.packed.bits = r.u8();
    q.mode = static_cast<QuantMode>(r.u8() != 0);
    q.packed.signed_vals = r.u8() != 0;
    q.group_size = r.i64();
    q.packed.logical_len = static_cast<int64_t>(r.u64());
    const uint64_t n_scales = r.u64();
    r.need_count(n_scales, 2);
    q.scales.resize(n_scales);
    for (auto& v : q.scales) v = r.u16();
    const uint64_t n_zeros = r.u64();
    r.need_count(n_zeros, 4);
    q.zeros.resize(n_zeros);
    for (auto& v : q.zeros) v = r.i32();
    const uint64_t n_awq = r.u64();
    r.need_count(n_awq, 2);
    q.awq_scale.resize(n_awq);
    for (auto& v : q.awq_scale) v = r.u16();
    const uint64_t payload = r.u64();
    r.need(payload);
    q.packed.payload.assign(r.buf.data() + r.pos, r.buf.data() + r.pos + payload);
    r.pos += payload;
  }

  const uint32_t expected = crc32(r.buf.data() + section_start, r.pos - section_start);
  const uint32_t stored = r.u32();
  if (stored != expected)
    throw CheckpointError(Code::CrcMismatch, "CRC mismatch for tensor '" + e.name + "'");
  r.skip_pad(8);
  return e;
}

}  // namespace

const TensorEntry* ModelFile::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::vector<uint8_t> serialize_model(const ModelFile& m) {
  std::vector<uint8_t> out;
  Writer w{out};
  w.bytes(reinterpret_cast<const uint8_t*>(kFormatMagic), sizeof(kFormatMagic));
  w.u32(m.version);
  w.u32(static_cast<uint32_t>(m.tensors.size()));
  for (const auto& e : m.tensors) append_section(w, e);
  return out;
}

ModelFile deserialize_model(const std::vector<uint8_t>& bytes) {
  Reader r{bytes};
  r.need(sizeof(kFormatMagic));
  if (std::memcmp(bytes.data(), kFormatMagic, sizeof(kFormatMagic)) != 0)
    throw CheckpointError(Code::BadMagic, "not an awqkit checkpoint (bad magic)");
  r.pos = sizeof(kFormatMagic);

  ModelFile m;
  m.version = r.u32();
  if (m.version != kFormatVersion)
    throw CheckpointError(Code::BadVersion,
                          "unsupported format version " + std::to_string(m.version));
  const uint32_t count = r.u32();
  m.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) m.tensors.push_back(read_section(r));
  return m;
}

void save_model(const ModelFile& m, const std::string& path) {
  const std::vector<uint8_t> bytes = serialize_model(m);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(Code::Io, "cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError(Code::Io, "short write to '" + path + "'");
}

ModelFile load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(Code::Io, "cannot open '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

int64_t serialized_size(const ModelFile& m) {
  int64_t size = 16;  // magic + version + count
  for (const auto& e : m.tensors) {
    int64_t s = 4 + static_cast<int64_t>(e.name.size()) + 1 + 1 +
                8 * static_cast<int64_t>(e.shape.size());
    if (e.dtype == TensorDType::F32) {
      s += 8 + 4 * e.f32.numel();
    } else {
      s += 4 + 8 + 8;
      s += 8 + 2 * static_cast<int64_t>(e.qdata.scales.size());
      s += 8 + 4 * static_cast<int64_t>(e.qdata.zeros.size());
      s += 8 + 2 * static_cast<int64_t>(e.qdata.awq_scale.size());
      s += 8 + static_cast<int64_t>(e.qdata.packed.payload.size());
    }
    s += 4;  // crc
    size += round_up(s, 8);
  }
  return size;
}

TensorEntry entry_from_tensor(const std::string& name, const Tensor& t) {
  TensorEntry e;
  e.name = name;
  e.dtype = TensorDType::F32;
  e.shape = t.shape;
  e.f32 = t;
  return e;
}

TensorEntry entry_from_layer(const std::string& name, const LinearLayerPacked& layer) {
  TensorEntry e;
  e.name = name;
  e.dtype = TensorDType::PackedInt;
  e.shape = {layer.out_features, layer.in_features};
  e.qdata.packed = layer.packed;
  e.qdata.scales = layer.scales;
  e.qdata.zeros = layer.zeros;
  e.qdata.awq_scale = layer.awq_scale;
  e.qdata.group_size = layer.group_size;
  e.qdata.mode = layer.mode;
  return e;
}

LinearLayerPacked layer_from_entry(const TensorEntry& e) {
  if (e.dtype != TensorDType::PackedInt)
    throw CheckpointError(Code::BadField, "tensor '" + e.name + "' is not packed");
  if (e.shape.size() != 2)
    throw CheckpointError(Code::BadField,
                          "packed tensor '" + e.name + "' has shape " + shape_str(e.shape));
  LinearLayerPacked layer;
  layer.packed = e.qdata.packed;
  layer.scales = e.qdata.scales;
  layer.zeros = e.qdata.zeros;
  layer.awq_scale = e.qdata.awq_scale;
  layer.out_features = e.shape[0];
  layer.in_features = e.shape[1];
  layer.group_size = e.qdata.group_size;
  layer.bits = e.qdata.packed.bits;
  layer.mode = e.qdata.mode;
  if (layer.out_features <= 0 || e.qdata.packed.logical_len % layer.out_features != 0)
    throw CheckpointError(Code::BadField, "payload of '" + e.name + "' does not tile its shape");
  layer.padded_cols = e.qdata.packed.logical_len / layer.out_features;
  if (layer.padded_cols < layer.in_features)
    throw CheckpointError(Code::BadField, "payload of '" + e.name + "' smaller than its shape");
  const int64_t expected_scales = layer.out_features * layer.groups_per_row();
  if (static_cast<int64_t>(layer.scales.size()) != expected_scales)
    throw CheckpointError(Code::BadField, "scale count mismatch for '" + e.name + "'");
  if (static_cast<int64_t>(layer.awq_scale.size()) != layer.in_features)
    throw CheckpointError(Code::BadField, "awq scale count mismatch for '" + e.name + "'");
  layer.derive_inverse_scales();
  return layer;
}

const Tensor* CalibrationSet::find(const std::string& name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return &t;
  return nullptr;
}

CalibrationSet load_calibration(const std::string& path) {
  const ModelFile m = load_model(path);
  if (m.tensors.empty())
    throw CheckpointError(Code::Empty, "calibration file '" + path + "' holds no activations");
  CalibrationSet calib;
  for (const auto& e : m.tensors) {
    if (e.dtype != TensorDType::F32)
      throw CheckpointError(Code::BadField,
                            "calibration entry '" + e.name + "' must be full precision");
    e.f32.check_finite(("calibration entry '" + e.name + "'").c_str());
    calib.entries.emplace_back(e.name, e.f32);
  }
  return calib;
}

void save_calibration(const CalibrationSet& calib, const std::string& path) {
  ModelFile m;
  for (const auto& [name, t] : calib.entries) m.tensors.push_back(entry_from_tensor(name, t));
  save_model(m, path);
}

}  // namespace awqkit
