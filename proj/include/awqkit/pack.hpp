// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "awqkit/common.hpp"

namespace awqkit {

// Storage orders for low-bit payloads.
//
//   linear  - elements packed consecutively, low bits first within each byte;
//             3-bit fields span byte boundaries as a little-endian bitstream.
//   simd128 - 32-element blocks reordered as w0,w16,w1,w17,...,w15,w31 so a
//             128-bit register unpacks all 32 4-bit values with one wide AND
//             (low 16 lanes) and one shift+AND (high 16 lanes). Block position
//             j holds logical index (j%2)*16 + (j/2); lane stride is 16.
//   gpu8    - 8-element blocks reordered as w0,w2,w4,w6,w1,w3,w5,w7.
enum class PackLayout : uint8_t { Linear = 0, Simd128 = 1, Gpu8 = 2 };

const char* pack_layout_name(PackLayout layout);
PackLayout pack_layout_from_name(const std::string& name);

// Element granularity a payload is padded to. Interleaved layouts pad to the
// block (32 / 8); linear pads to the byte boundary of the bit width.
int64_t pack_block_elems(PackLayout layout, int bits);

// simd128 / gpu8 are anchored to nibble-style widths; 3-bit and 8-bit data
// stay linear.
bool pack_layout_supported(PackLayout layout, int bits);

struct PackedWeights {
  PackLayout layout = PackLayout::Linear;
  int bits = 4;
  bool signed_vals = true;  // offset encoding: stored field = q + 2^(N-1)
  int64_t logical_len = 0;  // element count before padding
  std::vector<uint8_t> payload;

  int64_t padded_len() const { return round_up(logical_len, pack_block_elems(layout, bits)); }
};

// Logical index stored at block position j of a simd128 block.
inline int64_t simd128_perm(int64_t j) { return (j % 2) * 16 + j / 2; }

// Logical index stored at block position j of a gpu8 block.
inline int64_t gpu8_perm(int64_t j) { return j < 4 ? 2 * j : 2 * (j - 4) + 1; }

// Packs q into the requested layout. signed_vals selects the valid input
// range: [-2^(N-1), 2^(N-1)-1] with offset encoding, or [0, 2^N-1] stored
// as-is. Out-of-range values are rejected with their index. Padding elements
// encode zero, so padded tails dequantize to 0.
PackedWeights pack(std::span<const int32_t> q, int bits, PackLayout layout,
                   bool signed_vals = true);

// Exact inverse of pack (padding stripped). Rejects truncated payloads.
std::vector<int32_t> unpack(const PackedWeights& p);

// Decodes `elems` values (a whole number of blocks) from `payload` into
// `out`, applying the layout permutation and offset decoding. This is the
// kernel-facing primitive: it touches only the given span.
void unpack_span(const uint8_t* payload, int64_t elems, int bits, PackLayout layout,
                 bool signed_vals, int32_t* out);

}  // namespace awqkit
