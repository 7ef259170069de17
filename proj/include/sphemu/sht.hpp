#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sphemu/grid.hpp"
#include "sphemu/wigner.hpp"

namespace sphemu::detail {
class Dft;
}

namespace sphemu {

// Integral of e^{i q theta} sin(theta) over [0, pi].
std::complex<double> i_integral(long long q);

// Real packing of a conjugate-symmetric coefficient set, length band_limit^2.
// Order per degree l: m=0 value, then (Re, Im) pairs for m = 1..l.
struct HarmonicVector {
  int band_limit = 0;
  std::vector<double> values;

  HarmonicVector() = default;
  explicit HarmonicVector(int l_max_plus_1)
      : band_limit(l_max_plus_1),
        values(static_cast<std::size_t>(l_max_plus_1) * l_max_plus_1, 0.0) {}

  static std::size_t packed_size(int band_limit) {
    return static_cast<std::size_t>(band_limit) * band_limit;
  }
  static std::size_t index_mean(int l) { return static_cast<std::size_t>(l) * l; }
  static std::size_t index_re(int l, int m) {
    return static_cast<std::size_t>(l) * l + 2 * m - 1;
  }
  static std::size_t index_im(int l, int m) {
    return static_cast<std::size_t>(l) * l + 2 * m;
  }

  // m may be negative; uses z_{l,-m} = (-1)^m conj(z_{l,m}).
  std::complex<double> coeff(int l, int m) const;
  void set_coeff(int l, int m, std::complex<double> z);  // m >= 0

  // Sum over all |z_{l,m}|^2 including negative m.
  double parseval_energy() const;
};

// Coefficient series ordered (replicate, time, packed index).
struct CoeffSeries {
  int band_limit = 0;
  int t_len = 0;
  int r_len = 0;
  std::vector<double> values;

  CoeffSeries() = default;
  CoeffSeries(int l_max_plus_1, int t, int r)
      : band_limit(l_max_plus_1), t_len(t), r_len(r),
        values(static_cast<std::size_t>(r) * t * l_max_plus_1 * l_max_plus_1, 0.0) {}

  std::size_t slice_stride() const { return HarmonicVector::packed_size(band_limit); }
  std::span<double> slice(int r, int t);
  std::span<const double> slice(int r, int t) const;
};

// Little-endian, magic "SPHC", then band_limit, t_len, r_len as u32 and the
// packed coefficients as f64.
void write_sphc(const std::string& path, const CoeffSeries& series);
CoeffSeries read_sphc(const std::string& path);

// Precomputed operators for one (grid, band limit) pair. Reusable across
// slices and threads; all apply methods are const.
struct ShtPlan {
  GridSpec spec;
  int band_limit = 0;
  std::shared_ptr<const WignerTables> wigner;

  // e^{-i m phi_j} / n_phi, row j, columns m = -(L-1)..L-1.
  std::vector<std::complex<double>> e_phi;
  // Quadrature weights for the longitude-transformed rings,
  // w(m2, theta) = (1/(2 n_theta - 2)) sum_{m'} I(m'+m2) e^{-i m' theta}.
  // w1 covers theta_0..theta_{n_theta-1}, w2 the reflected interior angles
  // 2 pi - theta_i for i = 1..n_theta-2; rows m2 = -(L-1)..L-1.
  std::vector<std::complex<double>> w1;
  std::vector<std::complex<double>> w2;
  // Parity signs (-1)^m applied when rings are extended past the pole.
  std::vector<double> d_parity;
  // I(m'+m2) lookup, rows m' and columns m2 over -(L-1)..L-1.
  std::vector<std::complex<double>> i_mat;

  const detail::Dft* ring_analysis = nullptr;
  const detail::Dft* ring_synthesis = nullptr;
  const detail::Dft* ext_analysis = nullptr;
  const detail::Dft* ext_synthesis = nullptr;

  int ext_len() const { return 2 * spec.n_theta - 2; }
  std::size_t fourier_cols() const { return static_cast<std::size_t>(2 * band_limit - 1); }
};

// Throws std::invalid_argument when the grid does not resolve band_limit.
// Builds (or reuses) the Wigner tables when none are supplied.
ShtPlan build_plan(GridSpec spec, int band_limit,
                   std::shared_ptr<const WignerTables> tables = nullptr);

// Scratch buffers for one transform; reused across calls on one thread.
struct ShtWorkspace {
  std::vector<std::complex<double>> ring_in, ring_out;
  std::vector<std::complex<double>> g;      // per-m ring spectra, n_theta rows
  std::vector<std::complex<double>> ext;    // extended colatitude line
  std::vector<std::complex<double>> spec1;  // transformed line
  std::vector<std::complex<double>> j;      // J(m, m2) table
  std::vector<std::complex<double>> k;      // K(m, m') table for synthesis
};

void forward_sht(const ShtPlan& plan, std::span<const double> field,
                 std::span<double> coeffs_out, ShtWorkspace* ws = nullptr);
void inverse_sht(const ShtPlan& plan, std::span<const double> coeffs,
                 std::span<double> field_out, ShtWorkspace* ws = nullptr);

HarmonicVector forward_sht(const ShtPlan& plan, const EquiangularField& field);
EquiangularField inverse_sht(const ShtPlan& plan, const HarmonicVector& coeffs);

CoeffSeries forward_sht_batch(const ShtPlan& plan, const FieldSeries& series, int threads = 1);
FieldSeries inverse_sht_batch(const ShtPlan& plan, const CoeffSeries& series, int threads = 1);

// Slow alternative analysis path: same J accumulation but through the w1/w2
// quadrature tables instead of the extended-line transform.
void forward_sht_via_weights(const ShtPlan& plan, std::span<const double> field,
                             std::span<double> coeffs_out);

// Fully 4pi-normalized associated Legendre values P~_{l,m}(cos theta) with
// Condon-Shortley phase, packed by l*(l+1)/2 + m for m <= l < band_limit.
std::vector<double> normalized_legendre_all(int band_limit, double theta);
double normalized_legendre(int l, int m, double theta);

// Direct Legendre synthesis of a packed coefficient set on any grid.
// Independent of the transform plan; cost O(points * band_limit^2).
EquiangularField synth_bandlimited(const HarmonicVector& coeffs, GridSpec target);

// Deterministic pseudo-random coefficients: packed slots are independent
// normals scaled by 1/(l+1) so the spectrum decays with degree.
HarmonicVector draw_random_coefficients(int band_limit, std::uint64_t seed);

// Exactly band-limited random field: draw_random_coefficients followed by the
// inverse transform. Same seed and spec give bit-identical fields.
EquiangularField synth_random_field(const ShtPlan& plan, std::uint64_t seed);
EquiangularField synth_random_field(GridSpec spec, int band_limit, std::uint64_t seed);

// Analysis by dense quadrature of an arbitrary function: trapezoid rule over
// n_theta_quad colatitudes, exact uniform rule over 2*band_limit longitudes.
// Converges O(1/n_theta_quad^2); serves as an independent reference.
HarmonicVector quadrature_oracle_sht(const std::function<double(double, double)>& f,
                                     int band_limit, int n_theta_quad);

// Surface integral of field^2 over the sphere computed from ring transforms
// and I(q) only, without Legendre or Wigner machinery. Exact for fields that
// are band-limited in longitude below the ring Nyquist.
double field_energy_quadrature(const EquiangularField& field);

}  // namespace sphemu
