#pragma once

#include <bit>
#include <cstdint>

namespace sphemu::detail {

inline constexpr double kHalfMax = 65504.0;

/// IEEE binary16 narrowing with round-to-nearest-even. Values whose correctly
/// rounded magnitude exceeds the largest finite half saturate to +-65504 and
/// bump *saturations when provided.
inline std::uint16_t half_from_float(float value, long long* saturations = nullptr) {
  const std::uint32_t f = std::bit_cast<std::uint32_t>(value);
  const auto hsign = static_cast<std::uint16_t>((f >> 16) & 0x8000u);
  const std::uint32_t fexp = (f >> 23) & 0xffu;
  std::uint32_t man = f & 0x7fffffu;

  if (fexp == 0xffu) {
    if (man != 0) return static_cast<std::uint16_t>(hsign | 0x7e00u);  // NaN
    if (saturations) ++*saturations;
    return static_cast<std::uint16_t>(hsign | 0x7bffu);
  }

  const std::int32_t exp = static_cast<std::int32_t>(fexp) - 127 + 15;
  if (exp >= 31) {
    if (saturations) ++*saturations;
    return static_cast<std::uint16_t>(hsign | 0x7bffu);
  }
  if (exp <= 0) {
    if (exp < -10) return hsign;  // underflows to zero even after rounding
    man |= 0x800000u;
    const int shift = 14 - exp;  // into a 10-bit subnormal significand
    std::uint32_t hman = man >> shift;
    const std::uint32_t rem = man & ((1u << shift) - 1u);
    const std::uint32_t half = 1u << (shift - 1);
    if (rem > half || (rem == half && (hman & 1u))) ++hman;
    return static_cast<std::uint16_t>(hsign | hman);  // carry lands in the exponent field
  }

  std::uint16_t h = static_cast<std::uint16_t>(hsign | (static_cast<std::uint32_t>(exp) << 10) |
                                               (man >> 13));
  const std::uint32_t rem = man & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) {
    ++h;
    if ((h & 0x7fffu) >= 0x7c00u) {  // rounded past the largest finite half
      if (saturations) ++*saturations;
      return static_cast<std::uint16_t>(hsign | 0x7bffu);
    }
  }
  return h;
}

inline float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1fu;
  const std::uint32_t man = h & 0x3ffu;
  std::uint32_t f;
  if (exp == 0) {
    if (man == 0) {
      f = sign;
    } else {
      std::uint32_t m = man;
      int e = 0;
      while (!(m & 0x400u)) {
        m <<= 1;
        ++e;
      }
      f = sign | (static_cast<std::uint32_t>(113 - e) << 23) | ((m & 0x3ffu) << 13);
    }
  } else if (exp == 31) {
    f = sign | 0x7f800000u | (man << 13);
  } else {
    f = sign | ((exp + 112) << 23) | (man << 13);
  }
  return std::bit_cast<float>(f);
}

/// Round-trips a double through binary16 storage (via float, both steps RNE).
inline double quantize_half(double v, long long* saturations = nullptr) {
  return static_cast<double>(half_to_float(half_from_float(static_cast<float>(v), saturations)));
}

/// Round-trips a double through binary32 storage.
inline double quantize_single(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace sphemu::detail
