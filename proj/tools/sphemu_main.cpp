// Command line front end: train, emulate, validate, sht, chol plus the
// synth/export utilities. Exit codes: 0 success, 2 validation failure,
// 1 any other error.

#include <CLI11.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sphemu/grid.hpp"
#include "sphemu/mpchol.hpp"
#include "sphemu/pipeline.hpp"
#include "sphemu/rng.hpp"
#include "sphemu/sht.hpp"
#include "sphemu/stochastic.hpp"
#include "sphemu/trend.hpp"
#include "sphemu/version.hpp"

namespace {

using namespace sphemu;

// Two-column CSV of (year, value); a header row is skipped. Years >= 1 form
// the trajectory and must be contiguous from 1; years <= 0 are the history
// and must be contiguous down from 0.
ForcingTrajectory read_forcing_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open forcing file " + path);
  std::map<std::int64_t, double> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    for (char& c : line)
      if (c == ',' || c == ';' || c == '\t') c = ' ';
    std::istringstream ss(line);
    std::int64_t year = 0;
    double value = 0.0;
    if (!(ss >> year >> value)) {
      if (line_no == 1) continue;  // header
      throw std::runtime_error(path + ": cannot parse line " + std::to_string(line_no));
    }
    if (!rows.emplace(year, value).second)
      throw std::runtime_error(path + ": duplicate year " + std::to_string(year));
  }
  ForcingTrajectory forcing;
  if (rows.empty()) return forcing;
  for (std::int64_t y = 1; rows.count(y); ++y) forcing.x.push_back(rows.at(y));
  for (std::int64_t y = 0; rows.count(y); --y) forcing.history.push_back(rows.at(y));
  std::size_t used = forcing.x.size() + forcing.history.size();
  if (used != rows.size())
    throw std::runtime_error(path + ": years must be contiguous around 1 (gap found)");
  return forcing;
}

ForcingTrajectory load_forcing(const std::string& path) {
  if (path.empty()) return {};
  return read_forcing_csv(path);
}

int run_sht(const std::string& input, const std::string& direction, const std::string& out,
            int band_limit, int n_theta, int n_phi, const std::string& wigner_cache,
            int threads) {
  if (direction == "forward") {
    int file_l = 0;
    FieldSeries series = read_sphf(input, &file_l);
    int l = band_limit > 0 ? band_limit : (file_l > 0 ? file_l : series.spec.max_band_limit());
    ShtPlan plan = build_plan(series.spec, l, load_or_build_wigner(l, wigner_cache));
    CoeffSeries coeffs = forward_sht_batch(plan, series, threads);
    write_sphc(out, coeffs);
    std::cout << "analyzed " << series.r_len << "x" << series.t_len << " slices at L=" << l
              << " -> " << out << "\n";
    return 0;
  }
  CoeffSeries coeffs = read_sphc(input);
  GridSpec spec = (n_theta > 0 && n_phi > 0) ? GridSpec{n_theta, n_phi}
                                             : GridSpec::from_band_limit(coeffs.band_limit);
  ShtPlan plan =
      build_plan(spec, coeffs.band_limit, load_or_build_wigner(coeffs.band_limit, wigner_cache));
  FieldSeries series = inverse_sht_batch(plan, coeffs, threads);
  write_sphf(out, series, coeffs.band_limit);
  std::cout << "synthesized " << series.r_len << "x" << series.t_len << " slices on "
            << spec.n_theta << "x" << spec.n_phi << " -> " << out << "\n";
  return 0;
}

int run_train(const std::string& input, const std::string& forcing_path, const std::string& out,
              const TrainConfig& config) {
  int file_l = 0;
  FieldSeries series = read_sphf(input, &file_l);
  TrainConfig cfg = config;
  if (cfg.band_limit == 0) cfg.band_limit = file_l;  // may still be 0: derive from grid
  ForcingTrajectory forcing = load_forcing(forcing_path);

  TrainDiagnostics diag;
  EmulatorModel model = train(series, forcing, cfg, &diag);
  save_bundle(out, model, cfg, series.t_len, series.r_len);

  std::cout << "trained band limit " << model.band_limit << " on " << series.spec.n_theta << "x"
            << series.spec.n_phi << " grid, T=" << series.t_len << ", R=" << series.r_len << "\n"
            << "locations without forcing terms: " << diag.collinear_warnings << "\n"
            << "zeroed lag series: " << diag.zeroed_var_series
            << ", non-causal lag series: " << diag.unstable_var_series << "\n"
            << "innovation nugget: " << diag.nugget
            << ", residual mean norm: " << diag.residual_mean_norm << "\n"
            << "bundle written to " << out << "\n";
  return 0;
}

int run_emulate(const std::string& model_dir, const std::string& forcing_path,
                const std::string& out, int t_out, std::uint64_t seed, int replicates,
                std::int64_t t_start, const std::string& wigner_cache, int threads) {
  EmulatorModel model = load_bundle(model_dir);
  ForcingTrajectory forcing = load_forcing(forcing_path);
  ShtPlan plan = build_plan(model.spec, model.band_limit,
                            load_or_build_wigner(model.band_limit, wigner_cache));
  FieldSeries series = emulate(model, plan, forcing, t_out, seed, replicates, threads, t_start);
  write_sphf(out, series, model.band_limit);
  std::cout << "emulated " << replicates << " replicate(s) of " << t_out << " steps (seed "
            << seed << ") -> " << out << "\n";
  return 0;
}

int run_validate(const std::string& model_dir, const std::string& input,
                 const std::string& forcing_path, const ValidationConfig& config,
                 std::int64_t t_start, const std::string& report_path) {
  EmulatorModel model = load_bundle(model_dir);
  FieldSeries holdout = read_sphf(input);
  ForcingTrajectory forcing = load_forcing(forcing_path);
  ValidationReport report = validate(model, holdout, forcing, config, t_start);
  if (!report_path.empty()) {
    std::ofstream f(report_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write report " + report_path);
    f << report.to_json();
  }
  std::cout << "validation " << (report.pass ? "PASS" : "FAIL") << ": mean flags "
            << report.flagged_mean_fraction * 100 << "%, std flags "
            << report.flagged_std_fraction * 100 << "% (max |z| "
            << report.max_abs_mean_z << " / " << report.max_abs_std_z << ")\n";
  return report.pass ? 0 : 2;
}

int run_chol(int n, int tile, const std::string& variant, int workers, int band_width_dp,
             double sp_fraction, std::uint64_t seed, bool residual,
             const std::string& stats_path) {
  MpCholConfig config;
  config.variant = variant_from_string(variant);
  config.tile_size = tile;
  config.band_width_dp = band_width_dp;
  config.sp_fraction = sp_fraction;
  config.workers = workers;

  std::vector<double> a = make_spd_test_matrix(n, seed);
  DenseCholResult result = tiled_cholesky_dense(a, n, config);

  nlohmann::json j = nlohmann::json::parse(result.stats.to_json());
  if (residual) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        am(a.data(), n, n), lm(result.factor.data(), n, n);
    double rel = (am - lm * lm.transpose()).norm() / am.norm();
    j["relative_residual"] = rel;
    std::cout << "relative residual " << rel << "\n";
  }
  if (!stats_path.empty()) {
    std::ofstream f(stats_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write stats " + stats_path);
    f << j.dump(2) << "\n";
  }
  std::cout << "factorized n=" << n << " tile=" << tile << " variant=" << variant
            << " workers=" << workers << " in " << result.stats.wall_seconds << " s ("
            << result.stats.total_tasks() << " tasks)\n";
  return 0;
}

int run_synth(int band_limit, int t_len, int r_len, std::uint64_t seed, int n_theta, int n_phi,
              const std::string& out, int threads) {
  GridSpec spec = (n_theta > 0 && n_phi > 0) ? GridSpec{n_theta, n_phi}
                                             : GridSpec::from_band_limit(band_limit);
  ShtPlan plan = build_plan(spec, band_limit);
  CoeffSeries coeffs(band_limit, t_len, r_len);
  detail::GaussianRng rng(seed);
  for (int r = 0; r < r_len; ++r)
    for (int t = 0; t < t_len; ++t) {
      auto slice = coeffs.slice(r, t);
      for (int l = 0; l < band_limit; ++l) {
        double scale = 1.0 / (l + 1);
        std::size_t lo = HarmonicVector::index_mean(l);
        for (std::size_t idx = lo; idx <= lo + 2 * static_cast<std::size_t>(l); ++idx)
          slice[idx] = scale * rng.normal();
      }
    }
  FieldSeries series = inverse_sht_batch(plan, coeffs, threads);
  write_sphf(out, series, band_limit);
  std::cout << "synthesized " << r_len << "x" << t_len << " band-limited slices at L="
            << band_limit << " -> " << out << "\n";
  return 0;
}

int run_export(const std::string& input, const std::string& out, int r, int t) {
  FieldSeries series = read_sphf(input);
  if (r < 0 || r >= series.r_len || t < 0 || t >= series.t_len)
    throw std::runtime_error("slice (" + std::to_string(r) + ", " + std::to_string(t) +
                             ") outside the stored series");
  write_csv_slice(out, series, r, t);
  std::cout << "wrote slice r=" << r << " t=" << t << " -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spherical harmonic climate field emulator"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  int threads = 1;
  app.add_option("--threads", threads, "worker threads for parallel stages")
      ->check(CLI::PositiveNumber);

  // sht
  auto* sht = app.add_subcommand("sht", "forward or inverse spherical harmonic transform");
  sht->fallthrough();
  std::string sht_input, sht_direction, sht_out, sht_cache;
  int sht_l = 0, sht_n_theta = 0, sht_n_phi = 0;
  sht->add_option("--input", sht_input, "field (.sphf) or coefficient (.bin) file")
      ->required()
      ->check(CLI::ExistingFile);
  sht->add_option("--direction", sht_direction)
      ->required()
      ->check(CLI::IsMember({"forward", "inverse"}));
  sht->add_option("--out", sht_out)->required();
  sht->add_option("--L", sht_l, "band limit (forward only; default from file or grid)");
  sht->add_option("--n-theta", sht_n_theta, "synthesis grid rings (inverse only)");
  sht->add_option("--n-phi", sht_n_phi, "synthesis grid columns (inverse only)");
  sht->add_option("--wigner-cache", sht_cache, "path for precomputed Wigner tables");

  // train
  auto* train_cmd = app.add_subcommand("train", "fit trend, lag and innovation models");
  train_cmd->fallthrough();
  std::string train_input, train_forcing, train_out, train_variant = "dp", train_cache;
  TrainConfig train_cfg;
  train_cmd->add_option("--input", train_input)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--forcing", train_forcing, "annual forcing CSV (year, value)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "output bundle directory")->required();
  train_cmd->add_option("--P", train_cfg.var_order, "autoregressive order")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--K", train_cfg.trend.harmonics, "seasonal harmonic pairs")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--tau", train_cfg.trend.period, "time steps per year (12, 365, 8760)");
  train_cmd->add_option("--L", train_cfg.band_limit, "band limit (default from file or grid)");
  train_cmd->add_option("--variant", train_variant, "factor precision variant")
      ->check(CLI::IsMember({"dp", "dpsp", "dpsphp", "dphp"}));
  train_cmd->add_option("--tile", train_cfg.chol.tile_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--band-width-dp", train_cfg.chol.band_width_dp)
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--sp-fraction", train_cfg.chol.sp_fraction)
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--wigner-cache", train_cache);

  // emulate
  auto* emu = app.add_subcommand("emulate", "draw stochastic realizations from a bundle");
  emu->fallthrough();
  std::string emu_model, emu_forcing, emu_out, emu_cache;
  int emu_t = 0, emu_reps = 1;
  std::uint64_t emu_seed = 42;
  std::int64_t emu_t_start = 1;
  emu->add_option("--model", emu_model, "bundle directory")->required();
  emu->add_option("--T", emu_t, "steps to emulate")->required()->check(CLI::PositiveNumber);
  emu->add_option("--seed", emu_seed);
  emu->add_option("--out", emu_out)->required();
  emu->add_option("--replicates", emu_reps)->check(CLI::PositiveNumber);
  emu->add_option("--forcing", emu_forcing)->check(CLI::ExistingFile);
  emu->add_option("--t-start", emu_t_start, "1-based index of the first step");
  emu->add_option("--wigner-cache", emu_cache);

  // validate
  auto* val = app.add_subcommand("validate", "compare a bundle against held-out data");
  val->fallthrough();
  std::string val_model, val_input, val_forcing, val_report;
  ValidationConfig val_cfg;
  std::int64_t val_t_start = 1;
  val->add_option("--model", val_model, "bundle directory")->required();
  val->add_option("--input", val_input, "held-out field series")
      ->required()
      ->check(CLI::ExistingFile);
  val->add_option("--forcing", val_forcing)->check(CLI::ExistingFile);
  val->add_option("--reps", val_cfg.n_reps)->check(CLI::PositiveNumber);
  val->add_option("--seed", val_cfg.seed);
  val->add_option("--z-threshold", val_cfg.z_threshold)->check(CLI::PositiveNumber);
  val->add_option("--max-flagged", val_cfg.max_flagged_fraction)->check(CLI::Range(0.0, 1.0));
  val->add_option("--t-start", val_t_start, "1-based index of the first holdout step");
  val->add_option("--report", val_report, "write the report as JSON");

  // chol
  auto* chol = app.add_subcommand("chol", "tiled mixed-precision Cholesky benchmark");
  chol->fallthrough();
  std::string chol_variant = "dp", chol_stats;
  int chol_n = 0, chol_tile = 128, chol_workers = 1, chol_band = 1;
  double chol_frac = 0.05;
  std::uint64_t chol_seed = 1;
  bool chol_residual = false;
  chol->add_option("--n", chol_n, "matrix dimension")->required()->check(CLI::PositiveNumber);
  chol->add_option("--tile", chol_tile)->check(CLI::PositiveNumber);
  chol->add_option("--variant", chol_variant)
      ->check(CLI::IsMember({"dp", "dpsp", "dpsphp", "dphp"}));
  chol->add_option("--workers", chol_workers)->check(CLI::PositiveNumber);
  chol->add_option("--band-width-dp", chol_band)->check(CLI::PositiveNumber);
  chol->add_option("--sp-fraction", chol_frac)->check(CLI::Range(0.0, 1.0));
  chol->add_option("--seed", chol_seed, "seed for the benchmark matrix");
  chol->add_flag("--residual", chol_residual, "also compute ||A - LL^T||_F / ||A||_F");
  chol->add_option("--stats", chol_stats, "write factorization stats as JSON");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a seeded band-limited field series");
  synth->fallthrough();
  std::string synth_out;
  int synth_l = 0, synth_t = 1, synth_r = 1, synth_n_theta = 0, synth_n_phi = 0;
  std::uint64_t synth_seed = 7;
  synth->add_option("--L", synth_l, "band limit")->required()->check(CLI::PositiveNumber);
  synth->add_option("--T", synth_t)->check(CLI::PositiveNumber);
  synth->add_option("--R", synth_r)->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed);
  synth->add_option("--n-theta", synth_n_theta);
  synth->add_option("--n-phi", synth_n_phi);
  synth->add_option("--out", synth_out)->required();

  // export
  auto* exp = app.add_subcommand("export", "emit one time slice as text");
  exp->fallthrough();
  std::string exp_input, exp_out, exp_format = "csv";
  int exp_r = 0, exp_t = 0;
  exp->add_option("--input", exp_input)->required()->check(CLI::ExistingFile);
  exp->add_option("--format", exp_format)->check(CLI::IsMember({"csv"}));
  exp->add_option("--r", exp_r, "replicate index");
  exp->add_option("--t", exp_t, "time index");
  exp->add_option("--out", exp_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sht)
      return run_sht(sht_input, sht_direction, sht_out, sht_l, sht_n_theta, sht_n_phi, sht_cache,
                     threads);
    if (*train_cmd) {
      train_cfg.chol.variant = variant_from_string(train_variant);
      train_cfg.chol.workers = threads;
      train_cfg.threads = threads;
      train_cfg.wigner_cache = train_cache;
      return run_train(train_input, train_forcing, train_out, train_cfg);
    }
    if (*emu)
      return run_emulate(emu_model, emu_forcing, emu_out, emu_t, emu_seed, emu_reps, emu_t_start,
                         emu_cache, threads);
    if (*val) {
      val_cfg.threads = threads;
      return run_validate(val_model, val_input, val_forcing, val_cfg, val_t_start, val_report);
    }
    if (*chol)
      return run_chol(chol_n, chol_tile, chol_variant, chol_workers, chol_band, chol_frac,
                      chol_seed, chol_residual, chol_stats);
    if (*synth)
      return run_synth(synth_l, synth_t, synth_r, synth_seed, synth_n_theta, synth_n_phi,
                       synth_out, threads);
    if (*exp) return run_export(exp_input, exp_out, exp_r, exp_t);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
