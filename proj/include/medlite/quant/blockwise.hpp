// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "medlite/core/error.hpp"
#include "medlite/quant/nf4.hpp"

namespace medlite {

inline constexpr std::size_t kDefaultBlockSize = 64;

enum class QuantFormat : std::uint8_t { kNf4 = 4, kInt8 = 8 };

struct Nf4Block {
  std::vector<std::uint8_t> codes;  // one code per element, 0..15
  float scale = 0.0f;
};

struct Int8Block {
  std::vector<std::int8_t> codes;  // -127..127
  float scale = 0.0f;
};

namespace detail {
inline float absmax(std::span<const float> block) {
  float m = 0.0f;
  for (float v : block) {
    if (!std::isfinite(v)) throw DomainError("quantization input contains non-finite values");
    m = std::max(m, std::abs(v));
  }
  return m;
}
}  // namespace detail

// scale = max|x|; each x / scale goes to the nearest codebook level. A zero
// block maps to the zero level.
inline Nf4Block quantize_block_nf4(std::span<const float> block) {
  if (block.empty()) throw DomainError("cannot quantize an empty block");
  Nf4Block out;
  out.scale = detail::absmax(block);
  out.codes.resize(block.size(), kNf4ZeroCode);
  if (out.scale == 0.0f) return out;
  const double scale = out.scale;
  for (std::size_t i = 0; i < block.size(); ++i) out.codes[i] = nf4_nearest_code(block[i] / scale);
  return out;
}

// Symmetric absmax int8: code = round(127 * x / scale), halves away from 0.
inline Int8Block quantize_int8(std::span<const float> block) {
  if (block.empty()) throw DomainError("cannot quantize an empty block");
  Int8Block out;
  out.scale = detail::absmax(block);
  out.codes.resize(block.size(), 0);
  if (out.scale == 0.0f) return out;
  const double scale = out.scale;
  for (std::size_t i = 0; i < block.size(); ++i) {
    const long q = std::lround(127.0 * static_cast<double>(block[i]) / scale);
    out.codes[i] = static_cast<std::int8_t>(std::clamp(q, -127L, 127L));
  }
  return out;
}

inline float dequantize_nf4_code(std::uint8_t code, float scale) {
  return static_cast<float>(kNf4Levels[code] * static_cast<double>(scale));
}

inline float dequantize_int8_code(std::int8_t code, float scale) {
  return static_cast<float>(static_cast<double>(code) * static_cast<double>(scale) / 127.0);
}

// Two codes per byte, element 2i in the low nibble.
inline std::vector<std::uint8_t> pack_nibbles(std::span<const std::uint8_t> codes) {
  std::vector<std::uint8_t> packed((codes.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] > 15) throw DomainError("nibble code out of range");
    packed[i / 2] |= static_cast<std::uint8_t>((i % 2 == 0) ? codes[i] : (codes[i] << 4));
  }
  return packed;
}

inline std::vector<std::uint8_t> unpack_nibbles(std::span<const std::uint8_t> packed, std::size_t count) {
  if (packed.size() != (count + 1) / 2) throw FormatError("packed nibble buffer has the wrong size");
  std::vector<std::uint8_t> codes(count);
  for (std::size_t i = 0; i < count; ++i) {
    codes[i] = (i % 2 == 0) ? (packed[i / 2] & 0x0F) : (packed[i / 2] >> 4);
  }
  return codes;
}

struct QuantizedTensor {
  QuantFormat format = QuantFormat::kNf4;
  std::vector<std::uint8_t> codes;  // nf4: packed nibbles; int8: two's complement bytes
  std::vector<float> scales;        // one per block
  std::vector<std::size_t> shape;
  std::size_t block_size = kDefaultBlockSize;

  std::size_t elements() const noexcept {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  std::size_t block_count() const noexcept { return (elements() + block_size - 1) / block_size; }

  void validate() const {
    if (block_size == 0) throw FormatError("quantized tensor has zero block size");
    if (scales.size() != block_count()) throw FormatError("scale count does not match block count");
    for (float s : scales) {
      if (!(s >= 0.0f) || !std::isfinite(s)) throw FormatError("quantized tensor has an invalid scale");
    }
    const std::size_t expect = format == QuantFormat::kNf4 ? (elements() + 1) / 2 : elements();
    if (codes.size() != expect) throw FormatError("code buffer size does not match element count");
    if (format == QuantFormat::kInt8) {
      for (std::uint8_t c : codes) {
        if (static_cast<std::int8_t>(c) == -128) throw FormatError("int8 code -128 is outside the code range");
      }
    } else if (format != QuantFormat::kNf4) {
      throw FormatError("unknown quantization format");
    }
  }
};

// Quantizes `values` (row-major, product of `shape` elements) block by block.
inline QuantizedTensor quantize_tensor(std::span<const float> values, std::vector<std::size_t> shape,
                                       QuantFormat format, std::size_t block_size = kDefaultBlockSize) {
  if (block_size == 0) throw DomainError("block size must be positive");
  QuantizedTensor qt;
  qt.format = format;
  qt.shape = std::move(shape);
  qt.block_size = block_size;
  if (qt.elements() != values.size()) {
    throw DimensionError("tensor shape holds " + std::to_string(qt.elements()) + " elements, got " +
                         std::to_string(values.size()));
  }
  if (values.empty()) throw DomainError("cannot quantize an empty tensor");
  qt.scales.reserve(qt.block_count());
  std::vector<std::uint8_t> nibbles;
  if (format == QuantFormat::kNf4) nibbles.reserve(values.size());
  if (format == QuantFormat::kInt8) qt.codes.reserve(values.size());
  for (std::size_t start = 0; start < values.size(); start += block_size) {
    const auto block = values.subspan(start, std::min(block_size, values.size() - start));
    if (format == QuantFormat::kNf4) {
      auto q = quantize_block_nf4(block);
      qt.scales.push_back(q.scale);
      nibbles.insert(nibbles.end(), q.codes.begin(), q.codes.end());
    } else {
      auto q = quantize_int8(block);
      qt.scales.push_back(q.scale);
      for (std::int8_t c : q.codes) qt.codes.push_back(static_cast<std::uint8_t>(c));
    }
  }
  if (format == QuantFormat::kNf4) qt.codes = pack_nibbles(nibbles);
  return qt;
}

// nf4: level[code] * scale; int8: code * scale / 127.
inline std::vector<float> dequantize(const QuantizedTensor& qt) {
  qt.validate();
  const std::size_t n = qt.elements();
  std::vector<float> out(n);
  if (qt.format == QuantFormat::kNf4) {
    const auto codes = unpack_nibbles(qt.codes, n);
    for (std::size_t i = 0; i < n; ++i) out[i] = dequantize_nf4_code(codes[i], qt.scales[i / qt.block_size]);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = dequantize_int8_code(static_cast<std::int8_t>(qt.codes[i]), qt.scales[i / qt.block_size]);
    }
  }
  return out;
}

// IEEE binary16 conversion (round to nearest even) for 16-bit passthrough
// layers.
inline std::uint16_t float_to_half(float f) {
  std::uint32_t x;
  std::memcpy(&x, &f, sizeof(x));
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  const std::uint32_t exp = (x >> 23) & 0xFFu;
  std::uint32_t mant = x & 0x7FFFFFu;
  if (exp == 0xFF) return static_cast<std::uint16_t>(sign | 0x7C00u | (mant ? 0x200u : 0u));
  int e = static_cast<int>(exp) - 127 + 15;
  if (e >= 31) return static_cast<std::uint16_t>(sign | 0x7C00u);
  if (e <= 0) {
    if (e < -10) return static_cast<std::uint16_t>(sign);
    mant |= 0x800000u;
    const int shift = 14 - e;
    std::uint32_t half = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1);
    const std::uint32_t mid = 1u << (shift - 1);
    if (rem > mid || (rem == mid && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  std::uint32_t half = (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;  // may carry into the exponent
  return static_cast<std::uint16_t>(sign | half);
}

inline float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = (h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      int e = -1;
      do {
        ++e;
        mant <<= 1;
      } while ((mant & 0x400u) == 0);
      bits = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((mant & 0x3FFu) << 13);
    }
  } else if (exp == 0x1F) {
    bits = sign | 0x7F800000u | (mant << 13);
  } else {
    bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
  }
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return f;
}

}  // namespace medlite
