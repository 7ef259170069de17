#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sphemu::detail {

/// Seeded Gaussian stream: mt19937_64 (sequence fixed by the standard) plus
/// Box-Muller, so equal seeds reproduce bit-for-bit on a given platform.
/// std::normal_distribution is implementation-defined and deliberately avoided.
class GaussianRng {
 public:
  explicit GaussianRng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform draw in (0, 1], 53-bit resolution.
  double uniform() { return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sphemu::detail
