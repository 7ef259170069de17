#include "sphemu/fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace sphemu::detail {

namespace {
std::mutex& cache_mutex() {
  static std::mutex m;
  return m;
}
// Plans live for the process; FFTW plan creation is not thread-safe, lookup is
// guarded and execution via fftw_execute_dft is re-entrant.
std::map<std::pair<std::size_t, int>, std::unique_ptr<Dft>>& cache() {
  static std::map<std::pair<std::size_t, int>, std::unique_ptr<Dft>> c;
  return c;
}
}  // namespace

Dft::Dft(std::size_t n, int sign) : n_(n) {
  if (n == 0) throw std::invalid_argument("Dft: zero length");
  std::vector<std::complex<double>> a(n), b(n);
  plan_ = fftw_plan_dft_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(a.data()),
                           reinterpret_cast<fftw_complex*>(b.data()),
                           sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD,
                           FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_PRESERVE_INPUT);
  if (!plan_) throw std::runtime_error("Dft: plan creation failed");
}

const Dft& Dft::get(std::size_t n, int sign) {
  sign = sign < 0 ? -1 : 1;
  std::lock_guard<std::mutex> lock(cache_mutex());
  auto& c = cache();
  auto key = std::make_pair(n, sign);
  auto it = c.find(key);
  if (it == c.end()) it = c.emplace(key, std::unique_ptr<Dft>(new Dft(n, sign))).first;
  return *it->second;
}

void Dft::operator()(const std::complex<double>* in, std::complex<double>* out) const {
  fftw_execute_dft(static_cast<fftw_plan>(plan_),
                   reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
}

}  // namespace sphemu::detail
