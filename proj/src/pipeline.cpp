#include "sphemu/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "sphemu/sht.hpp"
#include "sphemu/version.hpp"

namespace sphemu {

namespace fs = std::filesystem;

EmulatorModel train(const FieldSeries& series, const ForcingTrajectory& forcing,
                    const TrainConfig& config, TrainDiagnostics* diagnostics) {
  series.validate();
  int band_limit = config.band_limit > 0 ? config.band_limit : series.spec.max_band_limit();
  if (!series.spec.admissible(band_limit))
    throw std::invalid_argument("training grid does not resolve band limit " +
                                std::to_string(band_limit));

  EmulatorModel model;
  model.spec = series.spec;
  model.band_limit = band_limit;
  model.trend = fit_trend(series, forcing, config.trend);
  FieldSeries standardized = detrend(series, model.trend, forcing);

  auto tables = load_or_build_wigner(band_limit, config.wigner_cache);
  ShtPlan plan = build_plan(series.spec, band_limit, tables);
  CoeffSeries coeffs = forward_sht_batch(plan, standardized, config.threads);

  VarFit var_fit = fit_var(coeffs, config.var_order);
  model.var = var_fit.model;
  model.innovation =
      estimate_innovation_covariance(var_fit.residuals, series.r_len, series.t_len,
                                     config.var_order, config.chol, config.threads);

  FieldSeries reconstructed = inverse_sht_batch(plan, coeffs, config.threads);
  model.noise = fit_noise_field(standardized, reconstructed);

  if (diagnostics) {
    diagnostics->collinear_warnings = model.trend.collinear_warnings;
    diagnostics->zeroed_var_series = model.var.zeroed_count;
    diagnostics->unstable_var_series = model.var.unstable_count;
    diagnostics->nugget = model.innovation.nugget;
    diagnostics->residual_mean_norm = var_fit.residual_mean_norm;
  }
  model.validate();
  return model;
}

void save_bundle(const std::string& dir, const EmulatorModel& model,
                 const TrainConfig& config, std::int64_t t_len, int r_len) {
  model.validate();
  fs::create_directories(dir);
  write_trnd((fs::path(dir) / "trend.bin").string(), model.trend, model.band_limit);
  write_varm((fs::path(dir) / "var.bin").string(), model.var);
  write_ucov((fs::path(dir) / "ucov.bin").string(), model.innovation);
  write_nois((fs::path(dir) / "noise.bin").string(), model.noise);

  // Only run-independent facts: a retrain with another worker count must
  // reproduce these bytes exactly.
  nlohmann::json j;
  j["format"] = "sphemu-bundle-v1";
  j["tool_version"] = kVersion;
  j["band_limit"] = model.band_limit;
  j["grid"] = {{"n_theta", model.spec.n_theta}, {"n_phi", model.spec.n_phi}};
  j["trend"] = {{"harmonics", model.trend.config.harmonics},
                {"period", model.trend.config.period}};
  j["var_order"] = model.var.order;
  j["training"] = {{"t_len", t_len}, {"r_len", r_len}};
  j["innovation"] = {{"nugget", model.innovation.nugget},
                     {"variant", to_string(model.innovation.factored_variant)}};
  j["chol"] = {{"variant", to_string(config.chol.variant)},
               {"tile_size", config.chol.tile_size},
               {"band_width_dp", config.chol.band_width_dp},
               {"sp_fraction", config.chol.sp_fraction}};
  std::ofstream out(fs::path(dir) / "provenance.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write provenance.json in " + dir);
  out << j.dump(2) << "\n";
  if (!out.good()) throw std::runtime_error("write failed for provenance.json in " + dir);
}

EmulatorModel load_bundle(const std::string& dir) {
  EmulatorModel model;
  int trend_band_limit = 0;
  model.trend = read_trnd((fs::path(dir) / "trend.bin").string(), &trend_band_limit);
  model.var = read_varm((fs::path(dir) / "var.bin").string());
  model.innovation = read_ucov((fs::path(dir) / "ucov.bin").string());
  model.noise = read_nois((fs::path(dir) / "noise.bin").string());
  model.spec = model.trend.spec;
  model.band_limit = model.var.band_limit;
  if (trend_band_limit != 0 && trend_band_limit != model.band_limit)
    throw std::runtime_error(dir + ": trend and lag model disagree on the band limit");
  model.validate();
  return model;
}

namespace {

// Mean power per degree of a packed coefficient slice.
void accumulate_spectrum(std::span<const double> coeffs, int band_limit,
                         std::vector<double>& acc) {
  for (int l = 0; l < band_limit; ++l) {
    double p = coeffs[HarmonicVector::index_mean(l)] * coeffs[HarmonicVector::index_mean(l)];
    for (int m = 1; m <= l; ++m) {
      double re = coeffs[HarmonicVector::index_re(l, m)];
      double im = coeffs[HarmonicVector::index_im(l, m)];
      p += 2.0 * (re * re + im * im);
    }
    acc[static_cast<std::size_t>(l)] += p;
  }
}

std::vector<double> mean_spectrum(const ShtPlan& plan, const FieldSeries& standardized,
                                  int threads) {
  CoeffSeries coeffs = forward_sht_batch(plan, standardized, threads);
  std::vector<double> acc(static_cast<std::size_t>(plan.band_limit), 0.0);
  for (int r = 0; r < coeffs.r_len; ++r)
    for (int t = 0; t < coeffs.t_len; ++t) accumulate_spectrum(coeffs.slice(r, t), plan.band_limit, acc);
  double inv = 1.0 / (static_cast<double>(coeffs.r_len) * coeffs.t_len);
  for (double& v : acc) v *= inv;
  return acc;
}

}  // namespace

ValidationReport validate(const EmulatorModel& model, const FieldSeries& holdout,
                          const ForcingTrajectory& forcing, const ValidationConfig& config,
                          std::int64_t t_start) {
  model.validate();
  holdout.validate();
  if (!(holdout.spec == model.spec))
    throw std::invalid_argument("holdout grid differs from the model grid");
  if (config.n_reps < 2) throw std::invalid_argument("validation needs at least 2 replicates");

  auto tables = load_or_build_wigner(model.band_limit, "");
  ShtPlan plan = build_plan(model.spec, model.band_limit, tables);
  FieldSeries emu = emulate(model, plan, forcing, holdout.t_len, config.seed, config.n_reps,
                            config.threads, t_start);

  const std::size_t points = model.spec.points();
  const int t_len = holdout.t_len;

  // Per-location holdout moments, pooled over its replicates.
  std::vector<double> h_mean(points, 0.0), h_std(points, 0.0);
  for (int r = 0; r < holdout.r_len; ++r)
    for (int t = 0; t < t_len; ++t) {
      auto s = holdout.slice(r, t);
      for (std::size_t loc = 0; loc < points; ++loc) h_mean[loc] += s[loc];
    }
  double inv_h = 1.0 / (static_cast<double>(holdout.r_len) * t_len);
  for (double& v : h_mean) v *= inv_h;
  for (int r = 0; r < holdout.r_len; ++r)
    for (int t = 0; t < t_len; ++t) {
      auto s = holdout.slice(r, t);
      for (std::size_t loc = 0; loc < points; ++loc) {
        double d = s[loc] - h_mean[loc];
        h_std[loc] += d * d;
      }
    }
  for (double& v : h_std) v = std::sqrt(v * inv_h);

  // Replicate-level emulator moments give the sampling scale for the screens.
  std::vector<double> e_mean_acc(points, 0.0), e_mean_sq(points, 0.0);
  std::vector<double> e_std_acc(points, 0.0), e_std_sq(points, 0.0);
  std::vector<double> rep_mean(points), rep_sq(points);
  for (int r = 0; r < config.n_reps; ++r) {
    std::fill(rep_mean.begin(), rep_mean.end(), 0.0);
    std::fill(rep_sq.begin(), rep_sq.end(), 0.0);
    for (int t = 0; t < t_len; ++t) {
      auto s = emu.slice(r, t);
      for (std::size_t loc = 0; loc < points; ++loc) {
        rep_mean[loc] += s[loc];
        rep_sq[loc] += s[loc] * s[loc];
      }
    }
    for (std::size_t loc = 0; loc < points; ++loc) {
      double m = rep_mean[loc] / t_len;
      double v = std::max(0.0, rep_sq[loc] / t_len - m * m);
      double s = std::sqrt(v);
      e_mean_acc[loc] += m;
      e_mean_sq[loc] += m * m;
      e_std_acc[loc] += s;
      e_std_sq[loc] += s * s;
    }
  }

  ValidationReport report;
  report.n_locations = static_cast<int>(points);
  report.n_reps = config.n_reps;
  int flagged_mean = 0, flagged_std = 0;
  for (std::size_t loc = 0; loc < points; ++loc) {
    double n = config.n_reps;
    // The holdout statistic pools r_len replicates of the same length, so it
    // carries sampling noise at the replicate scale too; both terms belong in
    // the standard error of the difference.
    double h_r = holdout.r_len;
    double mm = e_mean_acc[loc] / n;
    double mv = std::max(0.0, e_mean_sq[loc] / n - mm * mm) * n / (n - 1);
    double se_m = std::max(std::sqrt(mv / n + mv / h_r), 1e-12);
    double zm = (mm - h_mean[loc]) / se_m;
    double sm = e_std_acc[loc] / n;
    double sv = std::max(0.0, e_std_sq[loc] / n - sm * sm) * n / (n - 1);
    double se_s = std::max(std::sqrt(sv / n + sv / h_r), 1e-12);
    double zs = (sm - h_std[loc]) / se_s;
    if (std::abs(zm) > config.z_threshold) ++flagged_mean;
    if (std::abs(zs) > config.z_threshold) ++flagged_std;
    report.max_abs_mean_z = std::max(report.max_abs_mean_z, std::abs(zm));
    report.max_abs_std_z = std::max(report.max_abs_std_z, std::abs(zs));
  }
  report.flagged_mean_fraction = static_cast<double>(flagged_mean) / static_cast<double>(points);
  report.flagged_std_fraction = static_cast<double>(flagged_std) / static_cast<double>(points);

  FieldSeries h_standardized = detrend(holdout, model.trend, forcing, t_start);
  FieldSeries e_standardized = detrend(emu, model.trend, forcing, t_start);
  report.holdout_spectrum = mean_spectrum(plan, h_standardized, config.threads);
  report.emulated_spectrum = mean_spectrum(plan, e_standardized, config.threads);

  report.pass = report.flagged_mean_fraction <= config.max_flagged_fraction &&
                report.flagged_std_fraction <= config.max_flagged_fraction;
  return report;
}

std::string ValidationReport::to_json() const {
  nlohmann::json j;
  j["n_locations"] = n_locations;
  j["n_reps"] = n_reps;
  j["flagged_mean_fraction"] = flagged_mean_fraction;
  j["flagged_std_fraction"] = flagged_std_fraction;
  j["max_abs_mean_z"] = max_abs_mean_z;
  j["max_abs_std_z"] = max_abs_std_z;
  j["holdout_spectrum"] = holdout_spectrum;
  j["emulated_spectrum"] = emulated_spectrum;
  j["pass"] = pass;
  return j.dump(2) + "\n";
}

}  // namespace sphemu
