#pragma once

#include <complex>
#include <cstddef>

namespace sphemu::detail {

/// Immutable handle on a cached complex DFT plan of fixed length and sign.
/// sign -1: X_k = sum_j x_j e^{-2pi i jk/n} (analysis); sign +1: unnormalized
/// synthesis. Exact for arbitrary composite or prime lengths. Plan creation
/// is serialized internally; execution is thread-safe on caller buffers.
class Dft {
 public:
  /// Returns the shared plan, creating and caching it on first use. Call once
  /// per needed (n, sign) before spawning workers so they never plan.
  static const Dft& get(std::size_t n, int sign);

  void operator()(const std::complex<double>* in, std::complex<double>* out) const;

  std::size_t size() const { return n_; }

  Dft(const Dft&) = delete;
  Dft& operator=(const Dft&) = delete;

 private:
  Dft(std::size_t n, int sign);
  std::size_t n_;
  void* plan_;  // fftw_plan
};

}  // namespace sphemu::detail
