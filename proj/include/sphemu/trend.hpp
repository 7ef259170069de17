#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sphemu/grid.hpp"

namespace sphemu {

// Deterministic mean structure per location: intercept, response to the
// current-year forcing, exponentially weighted response to past forcing with
// shared memory parameter rho, and `harmonics` seasonal sine/cosine pairs on
// the given period (time steps per year).
struct TrendConfig {
  int harmonics = 5;
  int period = 8760;

  void validate() const;  // period must be 12, 365 or 8760
};

// Annual forcing values. x[k] is year k+1; history[k] is year -k, newest
// first. Lagged averages stop when the requested year predates the history.
struct ForcingTrajectory {
  std::vector<double> x;
  std::vector<double> history;

  bool empty() const { return x.empty() && history.empty(); }
  bool has_year(std::int64_t year) const;
  double at_year(std::int64_t year) const;  // 0 for unknown years
  // (1-rho) * sum_{s>=1} rho^{s-1} x_{year-s}, truncated at weight 1e-12 or
  // at the end of the recorded history.
  double lagged_mean(std::int64_t year, double rho) const;
};

// Fitted mean parameters for every grid location. Each record holds
// (beta0, beta1, beta2, rho, a_1..a_K, b_1..b_K, sigma), sigma being the
// residual scale used to standardize the field.
struct TrendModel {
  GridSpec spec;
  TrendConfig config;
  std::vector<double> values;
  int collinear_warnings = 0;  // locations fitted without forcing terms

  std::size_t record_stride() const { return 5 + 2 * static_cast<std::size_t>(config.harmonics); }
  std::span<const double> record(std::size_t loc) const;
  std::span<double> record(std::size_t loc);

  double beta0(std::size_t loc) const { return record(loc)[0]; }
  double beta1(std::size_t loc) const { return record(loc)[1]; }
  double beta2(std::size_t loc) const { return record(loc)[2]; }
  double rho(std::size_t loc) const { return record(loc)[3]; }
  double harmonic_a(std::size_t loc, int k) const { return record(loc)[4 + (k - 1)]; }
  double harmonic_b(std::size_t loc, int k) const {
    return record(loc)[4 + config.harmonics + (k - 1)];
  }
  double sigma(std::size_t loc) const { return record(loc)[record_stride() - 1]; }
};

// Mean value at 1-based time step t for one location.
double eval_mean_trend(const TrendModel& model, std::size_t loc, std::int64_t t,
                       const ForcingTrajectory& forcing);

// Least squares per location; rho is profiled out on the ensemble-pooled
// series and shared across locations. Requires t_len >= 4 + 2*harmonics.
// With an empty forcing the beta1/beta2 terms are dropped.
TrendModel fit_trend(const FieldSeries& series, const ForcingTrajectory& forcing,
                     TrendConfig config);

// Standardized residuals (y - m_t) / sigma. t_start is the 1-based time index
// of the first slice.
FieldSeries detrend(const FieldSeries& series, const TrendModel& model,
                    const ForcingTrajectory& forcing, std::int64_t t_start = 1);
// Inverse map m_t + sigma * z.
FieldSeries retrend(const FieldSeries& standardized, const TrendModel& model,
                    const ForcingTrajectory& forcing, std::int64_t t_start = 1);

// Mean values for steps t_start..t_start+t_len-1, laid out time-major with
// one row per step over all locations.
std::vector<double> mean_table(const TrendModel& model, const ForcingTrajectory& forcing,
                               int t_len, std::int64_t t_start = 1);

// Little-endian, magic "TRND", then band_limit (0 when unspecified), n_theta,
// n_phi, harmonics, period as u32 and the per-location records as f64.
void write_trnd(const std::string& path, const TrendModel& model, int band_limit = 0);
TrendModel read_trnd(const std::string& path, int* band_limit_out = nullptr);

}  // namespace sphemu
