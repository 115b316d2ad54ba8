// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace awqkit {

// Base class for all library errors. Subclasses carry enough context to
// produce an actionable CLI diagnostic.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension mismatch; the message names both offending shapes.
class ShapeError : public Error {
public:
  using Error::Error;
};

// Bad numeric input (non-finite element, non-positive scale, ...).
class ValueError : public Error {
public:
  using Error::Error;
};

std::string shape_str(const std::vector<int64_t>& shape);

// ---------------------------------------------------------------------------
// IEEE 754 binary16 conversion (storage only; all math is fp32).
// Bit-level implementation so results are identical on every platform.
// ---------------------------------------------------------------------------
uint16_t fp32_to_fp16(float f);
float fp16_to_fp32(uint16_t h);

std::vector<uint16_t> fp32_to_fp16(const std::vector<float>& v);
std::vector<float> fp16_to_fp32(const std::vector<uint16_t>& v);

// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320). `seed` allows chaining.
uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0);

// Runs jobs [0, n) on up to `threads` workers. Results must be written into
// per-index slots by the caller; the function only guarantees every index is
// visited exactly once. threads <= 1 degenerates to a plain loop.
void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& fn);

// Worker count from the AWQKIT_THREADS environment variable, clamped to
// [1, hardware_concurrency]; defaults to hardware_concurrency when unset.
int env_thread_count();

inline int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }
inline int64_t round_up(int64_t a, int64_t b) { return ceil_div(a, b) * b; }

// Division guard used wherever a scale or step could underflow to zero.
inline constexpr float kDivEps = 1e-8f;

}  // namespace awqkit
