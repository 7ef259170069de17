#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sphemu {

// Equiangular latitude-longitude grid including both poles.
// theta_i = pi*i/(n_theta-1) for i in [0, n_theta), phi_j = 2*pi*j/n_phi.
struct GridSpec {
  int n_theta = 0;
  int n_phi = 0;

  // Tightest grid that supports exact analysis up to degree band_limit-1.
  static GridSpec from_band_limit(int band_limit);

  double theta(int i) const;
  double phi(int j) const;
  std::size_t points() const { return static_cast<std::size_t>(n_theta) * n_phi; }

  // Largest band limit the grid resolves exactly.
  int max_band_limit() const;
  bool admissible(int band_limit) const;
  // Throws std::invalid_argument when the dimensions are unusable.
  void validate() const;

  bool operator==(const GridSpec&) const = default;
};

struct ResolutionSummary {
  int band_limit = 0;
  double degrees_per_cell = 0.0;  // 180 / L
  double km_per_cell = 0.0;       // equatorial spacing, 111.2 km per degree
  std::int64_t grid_points = 0;   // points on the tight grid for this band limit
};

ResolutionSummary resolution_summary(int band_limit);

// One scalar field sampled on a grid, row-major with theta as the slow index.
struct EquiangularField {
  GridSpec spec;
  std::vector<double> values;

  EquiangularField() = default;
  explicit EquiangularField(GridSpec s) : spec(s), values(s.points(), 0.0) {}

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * spec.n_phi + j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * spec.n_phi + j]; }
};

// Gridded series over replicates and time, ordered (replicate, time, theta, phi).
struct FieldSeries {
  GridSpec spec;
  int t_len = 0;
  int r_len = 0;
  std::vector<double> values;

  FieldSeries() = default;
  FieldSeries(GridSpec s, int t, int r)
      : spec(s), t_len(t), r_len(r),
        values(static_cast<std::size_t>(r) * t * s.points(), 0.0) {}

  std::size_t slice_stride() const { return spec.points(); }
  std::span<double> slice(int r, int t);
  std::span<const double> slice(int r, int t) const;
  void validate() const;
};

// Binary container for gridded series. Little-endian, magic "SPHF", version 1,
// then n_theta, n_phi, band_limit, t_len, r_len as u32 and the samples as f64
// in (replicate, time, theta, phi) order. band_limit 0 means unspecified.
void write_sphf(const std::string& path, const FieldSeries& series, int band_limit = 0);
FieldSeries read_sphf(const std::string& path, int* band_limit_out = nullptr);

// Writes one (theta, phi, value) row per grid point for a single slice.
void write_csv_slice(const std::string& path, const FieldSeries& series, int r, int t);

// Bicubic interpolation onto a finer grid: not-a-knot cubic splines along
// theta, periodic cubic splines along phi. Source and target must both hold
// the poles, so n_theta >= 4 and n_phi >= 4 are required on the source.
EquiangularField upsample(const EquiangularField& field, GridSpec target);

}  // namespace sphemu
