#include "sphemu/wigner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <stdexcept>

#include "sphemu/io_util.hpp"

namespace sphemu {

namespace {
constexpr std::uint32_t kWigdVersion = 1;

int parity(int e) { return (e & 1) ? -1 : 1; }

// d^{l0}_{m2,m}(pi/2) for l0 = max(m2, m), both indices >= 0:
// (-1)^{l0-m} 2^{-l0} sqrt((2 l0)! / ((l0+lo)! (l0-lo)!)), lo = min(m2, m).
double chain_seed(int m2, int m) {
  int l0 = std::max(m2, m);
  int lo = std::min(m2, m);
  long double prod = 1.0L;
  for (int k = 1; k <= l0 - lo; ++k)
    prod *= static_cast<long double>(l0 + lo + k) / k;
  long double v = std::ldexp(1.0L, -l0) * std::sqrt(prod);
  return static_cast<double>(parity(l0 - m) * v);
}
}  // namespace

double wigner_brute_force(int l, int m2, int m) {
  if (l < 0 || std::abs(m2) > l || std::abs(m) > l) return 0.0;
  // Factorial-sum expansion evaluated at beta = pi/2, where the half-angle
  // powers collapse to 2^{-l}.
  auto lg = [](int k) { return std::lgamma(static_cast<long double>(k)); };
  long double pref =
      0.5L * (lg(l + m2 + 1) + lg(l - m2 + 1) + lg(l + m + 1) + lg(l - m + 1)) -
      l * std::log(2.0L);
  int s_lo = std::max(0, m - m2);
  int s_hi = std::min(l + m, l - m2);
  long double sum = 0.0L;
  for (int s = s_lo; s <= s_hi; ++s) {
    long double ln_den = lg(l + m - s + 1) + lg(s + 1) + lg(m2 - m + s + 1) + lg(l - m2 - s + 1);
    sum += parity(m2 - m + s) * std::exp(pref - ln_den);
  }
  return static_cast<double>(sum);
}

std::shared_ptr<const WignerTables> build_wigner_tables(int band_limit,
                                                        std::size_t memory_cap_bytes) {
  if (band_limit < 1) throw std::invalid_argument("band limit must be positive");
  const int big_l = band_limit;

  std::size_t d_entries = 0;
  for (int a = 0; a < big_l; ++a)
    for (int b = 0; b < big_l; ++b) d_entries += static_cast<std::size_t>(big_l - std::max(a, b));
  std::size_t q_entries =
      static_cast<std::size_t>(big_l) * big_l * (big_l + 1) / 2;
  std::size_t bytes = (d_entries + q_entries) * sizeof(double) +
                      (static_cast<std::size_t>(big_l) * big_l + 1) * sizeof(std::size_t);
  if (bytes > memory_cap_bytes)
    throw std::invalid_argument("Wigner tables for band limit " + std::to_string(big_l) +
                                " need " + std::to_string(bytes) +
                                " bytes, over the cap of " + std::to_string(memory_cap_bytes));

  auto t = std::shared_ptr<WignerTables>(new WignerTables());
  t->band_limit_ = big_l;
  t->d_offset_.assign(static_cast<std::size_t>(big_l) * big_l + 1, 0);
  std::size_t off = 0;
  for (int a = 0; a < big_l; ++a)
    for (int b = 0; b < big_l; ++b) {
      t->d_offset_[static_cast<std::size_t>(a) * big_l + b] = off;
      off += static_cast<std::size_t>(big_l - std::max(a, b));
    }
  t->d_offset_.back() = off;
  t->d_.assign(off, 0.0);

  // Degree recurrence at pi/2 for each index pair (a, b) = (m2, m):
  // l sqrt((l+1)^2-a^2) sqrt((l+1)^2-b^2) d_{l+1} =
  //   -(2l+1) a b d_l - (l+1) sqrt(l^2-a^2) sqrt(l^2-b^2) d_{l-1}.
  for (int a = 0; a < big_l; ++a) {
    for (int b = 0; b < big_l; ++b) {
      int l0 = std::max(a, b);
      double* chain = t->d_.data() + t->d_offset_[static_cast<std::size_t>(a) * big_l + b];
      chain[0] = chain_seed(a, b);
      if (l0 + 1 >= big_l) continue;
      double prev = 0.0;  // d_{l0-1} carries a vanishing weight
      double cur = chain[0];
      for (int l = l0; l + 1 < big_l; ++l) {
        double next;
        if (l == 0) {
          next = 0.0;  // d^1_{0,0}(pi/2) = cos(pi/2)
        } else {
          double c1 = std::sqrt(static_cast<double>(l + 1 + a)) *
                      std::sqrt(static_cast<double>(l + 1 - a)) *
                      std::sqrt(static_cast<double>(l + 1 + b)) *
                      std::sqrt(static_cast<double>(l + 1 - b));
          double c0 = std::sqrt(static_cast<double>(l + a)) *
                      std::sqrt(static_cast<double>(l - a)) *
                      std::sqrt(static_cast<double>(l + b)) *
                      std::sqrt(static_cast<double>(l - b));
          next = (-(2.0 * l + 1.0) * a * b * cur - (l + 1.0) * c0 * prev) / (l * c1);
        }
        chain[l + 1 - l0] = next;
        prev = cur;
        cur = next;
      }
    }
  }

  // Guard against recurrence drift: for fixed (l, b) the values over the
  // first index are a unit vector. Renormalize rows that escape [-1, 1].
  for (int l = 0; l < big_l; ++l) {
    for (int b = 0; b <= l; ++b) {
      bool bad = false;
      double s = 0.0;
      for (int a = 0; a <= l; ++a) {
        double v = t->d_half_pi(l, a, b);
        if (std::abs(v) > 1.0 + 1e-9) bad = true;
        s += (a == 0 ? 1.0 : 2.0) * v * v;
      }
      if (!bad) continue;
      ++t->renorm_warnings_;
      double scale = 1.0 / std::sqrt(s);
      for (int a = 0; a <= l; ++a) {
        std::size_t o = t->d_offset_[static_cast<std::size_t>(a) * big_l + b];
        t->d_[o + l - std::max(a, b)] *= scale;
      }
    }
  }

  t->build_q();
  return t;
}

double WignerTables::d_half_pi(int l, int m2, int m) const {
  if (l < 0 || l >= band_limit_) throw std::out_of_range("degree outside the table");
  if (std::abs(m2) > l || std::abs(m) > l) return 0.0;
  int sign = 1;
  if (m2 < 0) {
    sign *= parity(l + m);
    m2 = -m2;
  }
  if (m < 0) {
    sign *= parity(l + m2);
    m = -m;
  }
  std::size_t o = d_offset_[static_cast<std::size_t>(m2) * band_limit_ + m];
  return sign * d_[o + l - std::max(m2, m)];
}

void WignerTables::build_q() {
  const int big_l = band_limit_;
  q_.assign(static_cast<std::size_t>(big_l) * big_l * (big_l + 1) / 2, 0.0);
  for (int l = 0; l < big_l; ++l) {
    double norm = std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi));
    for (int m = 0; m <= l; ++m) {
      std::size_t row = (static_cast<std::size_t>(l) * (l + 1) / 2 + m) * big_l;
      for (int m2 = 0; m2 <= l; ++m2)
        q_[row + m2] = norm * d_half_pi(l, m2, 0) * d_half_pi(l, m2, m);
    }
  }
}

double WignerTables::q(int l, int m, int m2) const {
  if (l < 0 || l >= band_limit_ || m < 0 || m > l || m2 < 0 || m2 >= band_limit_)
    throw std::out_of_range("q index outside the table");
  if (m2 > l) return 0.0;
  return q_[(static_cast<std::size_t>(l) * (l + 1) / 2 + m) * band_limit_ + m2];
}

std::size_t WignerTables::memory_bytes() const {
  return d_.size() * sizeof(double) + q_.size() * sizeof(double) +
         d_offset_.size() * sizeof(std::size_t);
}

void write_wigd(const std::string& path, const WignerTables& tables) {
  io::BinaryWriter w(path);
  w.magic("WIGD");
  w.u32(kWigdVersion);
  w.u32(static_cast<std::uint32_t>(tables.band_limit()));
  w.u32(static_cast<std::uint32_t>(tables.renormalization_warnings()));
  w.f64_span(tables.d_);
  w.close();
}

std::shared_ptr<const WignerTables> read_wigd(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("WIGD");
  if (r.u32() != kWigdVersion) throw std::runtime_error(path + ": unsupported WIGD version");
  int big_l = static_cast<int>(r.u32());
  if (big_l < 1 || big_l > (1 << 16)) throw std::runtime_error(path + ": implausible band limit");
  int warnings = static_cast<int>(r.u32());

  auto t = std::shared_ptr<WignerTables>(new WignerTables());
  t->band_limit_ = big_l;
  t->renorm_warnings_ = warnings;
  t->d_offset_.assign(static_cast<std::size_t>(big_l) * big_l + 1, 0);
  std::size_t off = 0;
  for (int a = 0; a < big_l; ++a)
    for (int b = 0; b < big_l; ++b) {
      t->d_offset_[static_cast<std::size_t>(a) * big_l + b] = off;
      off += static_cast<std::size_t>(big_l - std::max(a, b));
    }
  t->d_offset_.back() = off;
  t->d_.resize(off);
  r.f64_span(t->d_);
  r.expect_eof();
  t->build_q();
  return t;
}

std::shared_ptr<const WignerTables> load_or_build_wigner(int band_limit,
                                                         const std::string& cache_path) {
  if (!cache_path.empty() && std::filesystem::exists(cache_path)) {
    try {
      auto t = read_wigd(cache_path);
      if (t->band_limit() == band_limit) return t;
    } catch (const std::exception&) {
      // fall through to a fresh build
    }
  }
  auto t = build_wigner_tables(band_limit);
  if (!cache_path.empty()) write_wigd(cache_path, *t);
  return t;
}

}  // namespace sphemu
