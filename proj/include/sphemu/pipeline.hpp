#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sphemu/grid.hpp"
#include "sphemu/mpchol.hpp"
#include "sphemu/stochastic.hpp"
#include "sphemu/trend.hpp"

namespace sphemu {

struct TrainConfig {
  int band_limit = 0;  // 0 derives the largest admissible value from the grid
  TrendConfig trend;
  int var_order = 2;
  MpCholConfig chol;
  int threads = 1;
  std::string wigner_cache;  // optional path for the precomputed tables
};

struct TrainDiagnostics {
  int collinear_warnings = 0;
  int zeroed_var_series = 0;
  int unstable_var_series = 0;
  double nugget = 0.0;
  double residual_mean_norm = 0.0;
};

EmulatorModel train(const FieldSeries& series, const ForcingTrajectory& forcing,
                    const TrainConfig& config, TrainDiagnostics* diagnostics = nullptr);

// Bundle directory layout: trend.bin, var.bin, ucov.bin, noise.bin and
// provenance.json. The JSON holds only run-independent facts (dimensions,
// configuration, tool version, training extent) so retraining with a
// different worker count reproduces the bundle byte for byte.
// t_len and r_len describe the training data; zero means unrecorded.
void save_bundle(const std::string& dir, const EmulatorModel& model,
                 const TrainConfig& config, std::int64_t t_len = 0, int r_len = 0);
EmulatorModel load_bundle(const std::string& dir);

struct ValidationConfig {
  int n_reps = 20;
  std::uint64_t seed = 1;
  double z_threshold = 3.0;
  double max_flagged_fraction = 0.01;
  int threads = 1;
};

struct ValidationReport {
  int n_locations = 0;
  int n_reps = 0;
  double flagged_mean_fraction = 0.0;  // locations with |z| above threshold
  double flagged_std_fraction = 0.0;   // locations with std ratio z above threshold
  double max_abs_mean_z = 0.0;
  double max_abs_std_z = 0.0;
  // Mean power per degree, averaged over holdout and emulated slices.
  std::vector<double> holdout_spectrum;
  std::vector<double> emulated_spectrum;
  bool pass = false;

  std::string to_json() const;
};

// Emulates n_reps replicates over the holdout window (same start index) and
// compares per-location first and second moments with z-score screens.
ValidationReport validate(const EmulatorModel& model, const FieldSeries& holdout,
                          const ForcingTrajectory& forcing, const ValidationConfig& config,
                          std::int64_t t_start = 1);

}  // namespace sphemu
