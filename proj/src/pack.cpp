// SPDX-License-Identifier: Apache-2.0
#include "awqkit/pack.hpp"

#include <string>

namespace awqkit {

const char* pack_layout_name(PackLayout layout) {
  switch (layout) {
    case PackLayout::Linear: return "linear";
    case PackLayout::Simd128: return "simd128";
    case PackLayout::Gpu8: return "gpu8";
  }
  return "?";
}

PackLayout pack_layout_from_name(const std::string& name) {
  if (name == "linear") return PackLayout::Linear;
  if (name == "simd128") return PackLayout::Simd128;
  if (name == "gpu8") return PackLayout::Gpu8;
  throw ValueError("unknown layout '" + name + "' (linear|simd128|gpu8)");
}

int64_t pack_block_elems(PackLayout layout, int bits) {
  switch (layout) {
    case PackLayout::Simd128: return 32;
    case PackLayout::Gpu8: return 8;
    case PackLayout::Linear:
      switch (bits) {
        case 2: return 4;
        case 3: return 8;  // 3 bytes per 8 elements
        case 4: return 2;
        case 8: return 1;
        default: break;
      }
  }
  throw ValueError("unsupported bit width " + std::to_string(bits));
}

bool pack_layout_supported(PackLayout layout, int bits) {
  if (bits != 2 && bits != 3 && bits != 4 && bits != 8) return false;
  if (layout == PackLayout::Linear) return true;
  return bits == 2 || bits == 4;
}

namespace {

void check_layout(PackLayout layout, int bits) {
  if (!pack_layout_supported(layout, bits))
    throw ValueError(std::string("layout ") + pack_layout_name(layout) +
                     " does not support bits=" + std::to_string(bits) + "; use linear");
}

inline int64_t block_perm(PackLayout layout, int64_t j) {
  switch (layout) {
    case PackLayout::Simd128: return simd128_perm(j);
    case PackLayout::Gpu8: return gpu8_perm(j);
    case PackLayout::Linear: return j;
  }
  return j;
}

inline void write_field(std::vector<uint8_t>& payload, int64_t index, int bits, uint32_t field) {
  const int64_t bit = index * bits;
  payload[bit >> 3] |= static_cast<uint8_t>(field << (bit & 7));
  if ((bit & 7) + bits > 8)
    payload[(bit >> 3) + 1] |= static_cast<uint8_t>(field >> (8 - (bit & 7)));
}

}  // namespace

PackedWeights pack(std::span<const int32_t> q, int bits, PackLayout layout, bool signed_vals) {
  check_layout(layout, bits);
  const int32_t bias = signed_vals ? (1 << (bits - 1)) : 0;
  const int32_t lo = signed_vals ? -bias : 0;
  const int32_t hi = signed_vals ? bias - 1 : (1 << bits) - 1;
  for (size_t i = 0; i < q.size(); ++i) {
    if (q[i] < lo || q[i] > hi)
      throw ValueError("quantized value " + std::to_string(q[i]) + " at index " +
                       std::to_string(i) + " outside [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]");
  }

  PackedWeights p;
  p.layout = layout;
  p.bits = bits;
  p.signed_vals = signed_vals;
  p.logical_len = static_cast<int64_t>(q.size());

  const int64_t block = pack_block_elems(layout, bits);
  const int64_t padded = p.padded_len();
  p.payload.assign(static_cast<size_t>(padded * bits / 8), 0);

  for (int64_t base = 0; base < padded; base += block) {
    for (int64_t j = 0; j < block; ++j) {
      const int64_t src = base + block_perm(layout, j);
      // Padding encodes zero so spilled tails dequantize to 0.
      const int32_t v = src < p.logical_len ? q[src] : 0;
      write_field(p.payload, base + j, bits, static_cast<uint32_t>(v + bias));
    }
  }
  return p;
}

void unpack_span(const uint8_t* payload, int64_t elems, int bits, PackLayout layout,
                 bool signed_vals, int32_t* out) {
  const int32_t bias = signed_vals ? (1 << (bits - 1)) : 0;

  if (layout == PackLayout::Simd128 && bits == 4) {
    // Contract form: per 16-byte block, one wide AND recovers lanes 0..15 and
    // one shift-right-4 plus AND recovers lanes 16..31.
    for (int64_t base = 0; base < elems; base += 32) {
      const uint8_t* b = payload + base / 2;
      int32_t* o = out + base;
      for (int64_t j = 0; j < 16; ++j) o[j] = static_cast<int32_t>(b[j] & 0x0F) - bias;
      for (int64_t j = 0; j < 16; ++j) o[16 + j] = static_cast<int32_t>((b[j] >> 4) & 0x0F) - bias;
    }
    return;
  }
  if (layout == PackLayout::Linear && bits == 4) {
    for (int64_t i = 0; i < elems; i += 2) {
      const uint8_t b = payload[i / 2];
      out[i] = static_cast<int32_t>(b & 0x0F) - bias;
      out[i + 1] = static_cast<int32_t>(b >> 4) - bias;
    }
    return;
  }
  if (layout == PackLayout::Linear && bits == 8) {
    for (int64_t i = 0; i < elems; ++i) out[i] = static_cast<int32_t>(payload[i]) - bias;
    return;
  }

  // Generic path: little-endian bitstream + block permutation.
  const int64_t block = pack_block_elems(layout, bits);
  for (int64_t base = 0; base < elems; base += block) {
    for (int64_t j = 0; j < block; ++j) {
      const int64_t bit = (base + j) * bits;
      uint32_t v = static_cast<uint32_t>(payload[bit >> 3]) >> (bit & 7);
      if ((bit & 7) + bits > 8)
        v |= static_cast<uint32_t>(payload[(bit >> 3) + 1]) << (8 - (bit & 7));
      v &= (1u << bits) - 1u;
      out[base + block_perm(layout, j)] = static_cast<int32_t>(v) - bias;
    }
  }
}

std::vector<int32_t> unpack(const PackedWeights& p) {
  check_layout(p.layout, p.bits);
  const int64_t padded = p.padded_len();
  const size_t expected = static_cast<size_t>(padded * p.bits / 8);
  if (p.payload.size() != expected)
    throw ValueError("payload holds " + std::to_string(p.payload.size()) + " bytes, expected " +
                     std::to_string(expected) + (p.payload.size() < expected ? " (truncated)" : ""));

  std::vector<int32_t> out(static_cast<size_t>(padded));
  unpack_span(p.payload.data(), padded, p.bits, p.layout, p.signed_vals, out.data());
  out.resize(static_cast<size_t>(p.logical_len));
  return out;
}

}  // namespace awqkit
