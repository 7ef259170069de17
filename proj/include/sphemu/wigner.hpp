#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace sphemu {

// Precomputed Wigner small-d values at pi/2 and the synthesis products
// q(l, m, m2) = sqrt((2l+1)/(4pi)) * d^l_{m2,0}(pi/2) * d^l_{m2,m}(pi/2)
// for 0 <= m <= l < band_limit, 0 <= m2 < band_limit.
class WignerTables {
 public:
  int band_limit() const { return band_limit_; }

  // d^l_{m2,m}(pi/2); any integer m2, m with |m2| <= l, |m| <= l, l < band_limit.
  double d_half_pi(int l, int m2, int m) const;

  // q(l, m, m2) for 0 <= m <= l, 0 <= m2 <= l. Out-of-triangle m2 gives 0.
  double q(int l, int m, int m2) const;

  std::size_t q_entry_count() const { return q_.size(); }
  std::size_t memory_bytes() const;
  // Rows whose recurrence drifted past |d| = 1 + 1e-9 and were renormalized.
  int renormalization_warnings() const { return renorm_warnings_; }

 private:
  friend std::shared_ptr<const WignerTables> build_wigner_tables(int, std::size_t);
  friend std::shared_ptr<const WignerTables> read_wigd(const std::string&);
  friend void write_wigd(const std::string&, const WignerTables&);

  void build_q();

  int band_limit_ = 0;
  int renorm_warnings_ = 0;
  // d chains for pairs (m, m2) with 0 <= m, m2 < band_limit, degrees
  // l = max(m, m2) .. band_limit-1 stored contiguously per pair.
  std::vector<double> d_;
  std::vector<std::size_t> d_offset_;  // band_limit^2 + 1 entries
  // q rows indexed by (l, m) with m <= l, band_limit columns each.
  std::vector<double> q_;
};

// Builds the tables with the three-term recurrence in l. Throws
// std::invalid_argument when the estimated footprint exceeds memory_cap_bytes.
std::shared_ptr<const WignerTables> build_wigner_tables(
    int band_limit, std::size_t memory_cap_bytes = std::size_t{2} << 30);

// Direct factorial-sum evaluation of d^l_{m2,m}(pi/2). Exact up to roundoff
// for small l; intended as an independent check, cost grows with l.
double wigner_brute_force(int l, int m2, int m);

// Binary cache. Little-endian, magic "WIGD", version 1, band_limit, then the
// d chains; q is rebuilt on load.
void write_wigd(const std::string& path, const WignerTables& tables);
std::shared_ptr<const WignerTables> read_wigd(const std::string& path);

// Reads the cache when it exists and matches band_limit, else builds and,
// when cache_path is nonempty, writes it.
std::shared_ptr<const WignerTables> load_or_build_wigner(int band_limit,
                                                         const std::string& cache_path);

}  // namespace sphemu
