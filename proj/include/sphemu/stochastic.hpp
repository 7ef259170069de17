#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "sphemu/grid.hpp"
#include "sphemu/mpchol.hpp"
#include "sphemu/sht.hpp"
#include "sphemu/trend.hpp"

namespace sphemu {

// Diagonal vector autoregression over packed harmonic coefficients: each of
// the band_limit^2 series evolves with its own scalar lag coefficients.
struct VarModel {
  int band_limit = 0;
  int order = 0;
  std::vector<double> phi;  // order rows of band_limit^2 coefficients

  double phi_at(int p, std::size_t idx) const {  // p = 1..order
    return phi[static_cast<std::size_t>(p - 1) * band_limit * band_limit + idx];
  }
  int zeroed_count = 0;    // series with no usable signal, coefficients set to 0
  int unstable_count = 0;  // series whose fitted lag polynomial is not causal
};

struct VarFit {
  VarModel model;
  // Innovations xi_t, rows ordered replicate-major then t = order+1..t_len,
  // columns the packed coefficient index.
  Eigen::MatrixXd residuals;
  std::vector<double> phi_se;  // asymptotic OLS standard errors, same layout as phi
  double residual_mean_norm = 0.0;
};

// Pooled least squares across replicates, no intercept. order 0 keeps the
// demeaned series as residuals.
VarFit fit_var(const CoeffSeries& coeffs, int order);

// Cross-coefficient innovation covariance and its lower Cholesky factor.
struct InnovationModel {
  Eigen::MatrixXd u_hat;  // symmetrized sample covariance of the innovations
  Eigen::MatrixXd v;      // lower factor of u_hat + nugget * I
  double nugget = 0.0;
  PrecisionVariant factored_variant = PrecisionVariant::kDp;
  FactorizationStats factor_stats;
};

// Covariance in fixed 256-row blocks (deterministic for any thread count),
// then tiled factorization with a diagonal nugget escalated tenfold from
// either 0 or 1e-8 * mean(diag) (rank-deficient row count) until the factor
// succeeds; gives up past 1e-2 * mean(diag).
InnovationModel estimate_innovation_covariance(const Eigen::MatrixXd& residuals, int r_len,
                                               int t_len, int order,
                                               const MpCholConfig& chol_config,
                                               int threads = 1);

// Per-location variance of the part of the standardized field the truncated
// harmonic reconstruction cannot carry.
struct NoiseField {
  GridSpec spec;
  std::vector<double> v2;
};

NoiseField fit_noise_field(const FieldSeries& detrended, const FieldSeries& reconstructed);

struct EmulatorModel {
  GridSpec spec;
  int band_limit = 0;
  TrendModel trend;
  VarModel var;
  InnovationModel innovation;
  NoiseField noise;

  void validate() const;  // cross-checks component dimensions
};

// Draws r_len replicates of t_out steps. All randomness comes from one
// generator in a fixed order, so the output is independent of threads.
// t_start is the 1-based time index of the first emitted step.
FieldSeries emulate(const EmulatorModel& model, const ShtPlan& plan,
                    const ForcingTrajectory& forcing, int t_out, std::uint64_t seed,
                    int r_len = 1, int threads = 1, std::int64_t t_start = 1);

// Little-endian model parts. "VARM": order, band_limit as u32, then the lag
// coefficients. "UCOV": dim u32, nugget f64, lower triangle of v, then the
// trailing extension (variant u32 and the lower triangle of u_hat).
// "NOIS": n_theta, n_phi as u32, then v2.
void write_varm(const std::string& path, const VarModel& model);
VarModel read_varm(const std::string& path);
void write_ucov(const std::string& path, const InnovationModel& model);
InnovationModel read_ucov(const std::string& path);
void write_nois(const std::string& path, const NoiseField& noise);
NoiseField read_nois(const std::string& path);

}  // namespace sphemu
