// Acceptance harness: run as `sphemu_acceptance <n>` with n in 1..10. Each
// criterion prints exactly one PASS/FAIL line with the measured quantities
// and exits 0 on pass, 1 on fail.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "sphemu/grid.hpp"
#include "sphemu/mpchol.hpp"
#include "sphemu/pipeline.hpp"
#include "sphemu/rng.hpp"
#include "sphemu/sht.hpp"
#include "sphemu/stochastic.hpp"
#include "sphemu/trend.hpp"
#include "sphemu/wigner.hpp"
#include "support/reference.hpp"

using namespace sphemu;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Pointwise synthesis of packed coefficients at an arbitrary direction.
double eval_expansion(const HarmonicVector& coeffs, double theta, double phi) {
  std::vector<double> p = normalized_legendre_all(coeffs.band_limit, theta);
  double value = 0.0;
  for (int l = 0; l < coeffs.band_limit; ++l) {
    value += coeffs.values[HarmonicVector::index_mean(l)] *
             p[static_cast<std::size_t>(l) * (l + 1) / 2];
    for (int m = 1; m <= l; ++m) {
      double re = coeffs.values[HarmonicVector::index_re(l, m)];
      double im = coeffs.values[HarmonicVector::index_im(l, m)];
      double basis = p[static_cast<std::size_t>(l) * (l + 1) / 2 + m];
      value += 2.0 * basis * (re * std::cos(m * phi) - im * std::sin(m * phi));
    }
  }
  return value;
}

std::vector<unsigned char> file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------

Outcome criterion_transform_exactness() {
  auto t0 = std::chrono::steady_clock::now();
  double worst_rt = 0.0, worst_energy = 0.0;
  for (int big_l : {8, 16, 32, 64}) {
    GridSpec spec = GridSpec::from_band_limit(big_l);
    ShtPlan plan = build_plan(spec, big_l);
    for (int rep = 1; rep <= 10; ++rep) {
      HarmonicVector coeffs =
          draw_random_coefficients(big_l, static_cast<std::uint64_t>(100 * big_l + rep));
      EquiangularField field = inverse_sht(plan, coeffs);
      HarmonicVector again = forward_sht(plan, field);
      worst_rt = std::max(worst_rt, max_abs_diff(coeffs.values, again.values));
      double from_coeffs = coeffs.parseval_energy();
      double from_field = field_energy_quadrature(field);
      worst_energy = std::max(worst_energy, std::abs(from_coeffs - from_field) / from_coeffs);
    }
  }
  double elapsed = seconds_since(t0);
  Outcome out;
  out.pass = worst_rt < 1e-9 && worst_energy < 1e-8 && elapsed < 60.0;
  out.detail = fmt("round-trip max %.3g (<1e-9), energy rel max %.3g (<1e-8), %.1f s (<60)",
                   worst_rt, worst_energy, elapsed);
  return out;
}

Outcome criterion_quadrature_agreement() {
  double worst = 0.0;
  for (int big_l : {4, 8, 16}) {
    HarmonicVector coeffs =
        draw_random_coefficients(big_l, static_cast<std::uint64_t>(31 + big_l));
    // Oversampled grid, analyzed through the production transform.
    GridSpec wide{2 * big_l + 1, 4 * big_l};
    ShtPlan plan = build_plan(wide, big_l);
    EquiangularField field = synth_bandlimited(coeffs, wide);
    HarmonicVector via_transform = forward_sht(plan, field);
    // Same function, projected by the independent dense-quadrature oracle.
    auto f = [&](double theta, double phi) { return eval_expansion(coeffs, theta, phi); };
    HarmonicVector via_oracle = oracle::quadrature_oracle_sht(f, big_l, 16385);
    worst = std::max(worst, max_abs_diff(via_transform.values, via_oracle.values));
  }
  Outcome out;
  out.pass = worst < 1e-6;
  out.detail = fmt("transform vs dense quadrature max abs %.3g (<1e-6)", worst);
  return out;
}

Outcome criterion_wigner() {
  auto low = build_wigner_tables(13);
  double worst_rec = 0.0;
  for (int l = 0; l <= 12; ++l)
    for (int m2 = -l; m2 <= l; ++m2)
      for (int m = -l; m <= l; ++m)
        worst_rec = std::max(
            worst_rec, std::abs(low->d_half_pi(l, m2, m) - wigner_brute_force(l, m2, m)));

  auto high = build_wigner_tables(65);
  double worst_ortho = 0.0;
  for (int l = 0; l <= 64; ++l)
    for (int m = -l; m <= l; ++m)
      for (int mp = m; mp <= l; ++mp) {
        double acc = 0.0;
        for (int m2 = -l; m2 <= l; ++m2)
          acc += high->d_half_pi(l, m2, m) * high->d_half_pi(l, m2, mp);
        double target = (m == mp) ? 1.0 : 0.0;
        worst_ortho = std::max(worst_ortho, std::abs(acc - target));
      }

  Outcome out;
  out.pass = worst_rec < 1e-12 && worst_ortho < 1e-10;
  out.detail = fmt("recursion vs factorial sum max %.3g (<1e-12), "
                   "orthonormality max dev %.3g (<1e-10)",
                   worst_rec, worst_ortho);
  return out;
}

Outcome criterion_line_integrals() {
  using cd = std::complex<double>;
  bool ok = i_integral(0) == cd{2.0, 0.0};
  ok = ok && i_integral(1) == cd{0.0, kPi / 2};
  ok = ok && i_integral(-1) == cd{0.0, -kPi / 2};
  ok = ok && i_integral(2) == cd{-2.0 / 3.0, 0.0};
  ok = ok && i_integral(-2) == cd{-2.0 / 3.0, 0.0};
  ok = ok && i_integral(3) == cd{0.0, 0.0};
  ok = ok && i_integral(4) == cd{-2.0 / 15.0, 0.0};
  Outcome out;
  out.pass = ok;
  out.detail = fmt("closed-form values bit-exact: %s", ok ? "yes" : "no");
  return out;
}

Outcome criterion_resolution_table() {
  struct Row {
    int band_limit;
    double degrees, km, megapoints;
  };
  const Row rows[] = {{720, 0.25, 27.8, 1.036},
                      {1440, 0.125, 13.9, 4.147},
                      {2880, 0.0625, 6.95, 16.59},
                      {5760, 0.03125, 3.48, 66.355}};
  double worst = 0.0;
  for (const Row& row : rows) {
    ResolutionSummary s = resolution_summary(row.band_limit);
    worst = std::max(worst, std::abs(s.degrees_per_cell - row.degrees) / row.degrees);
    worst = std::max(worst, std::abs(s.km_per_cell - row.km) / row.km);
    worst = std::max(worst,
                     std::abs(static_cast<double>(s.grid_points) / 1e6 - row.megapoints) /
                         row.megapoints);
  }
  Outcome out;
  out.pass = worst < 2e-3;
  out.detail = fmt("four band limits, worst relative deviation %.3g (<2e-3)", worst);
  return out;
}

Outcome criterion_cholesky_fidelity() {
  auto t0 = std::chrono::steady_clock::now();
  const int n = 512;
  double worst[4] = {0.0, 0.0, 0.0, 0.0};
  double worst_vs_oracle = 0.0;
  bool monotone = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::vector<double> a = make_spd_test_matrix(n, seed);
    double residual[4];
    for (int v = 0; v < 4; ++v) {
      MpCholConfig config;
      config.variant = static_cast<PrecisionVariant>(v);
      config.tile_size = 64;
      DenseCholResult res = tiled_cholesky_dense(a, n, config);
      residual[v] = oracle::relative_residual(a, res.factor, n);
      worst[v] = std::max(worst[v], residual[v]);
      if (config.variant == PrecisionVariant::kDp) {
        std::vector<double> ref = oracle::dense_cholesky(a, n);
        worst_vs_oracle = std::max(worst_vs_oracle, max_abs_diff(res.factor, ref));
      }
    }
    monotone = monotone && residual[0] <= residual[1] && residual[1] <= residual[2] &&
               residual[2] <= residual[3];
  }
  double elapsed = seconds_since(t0);
  Outcome out;
  out.pass = worst[0] < 1e-12 && worst[1] < 5e-6 && worst[2] < 1e-2 && worst[3] < 5e-2 &&
             monotone && worst_vs_oracle < 1e-13 && elapsed < 120.0;
  out.detail =
      fmt("residuals dp %.2g (<1e-12) dpsp %.2g (<5e-6) dpsphp %.2g (<1e-2) dphp %.2g "
          "(<5e-2), monotone %s, vs untiled %.2g (<1e-13), %.0f s (<120)",
          worst[0], worst[1], worst[2], worst[3], monotone ? "yes" : "no", worst_vs_oracle,
          elapsed);
  return out;
}

// Shared scaffolding for the two statistical criteria: a fully known
// generating model at band limit 8 whose coefficient processes are constant
// within each degree, which keeps the synthesized field isotropic and the
// per-location variance analytic.
struct GeneratingModel {
  EmulatorModel model;
  std::vector<double> phi_by_degree[3];  // lag value per degree
  std::vector<double> slot_scale2;       // innovation variance per packed slot
  std::vector<double> sigma_loc;
};

int degree_of_slot(int idx) { return static_cast<int>(std::sqrt(static_cast<double>(idx))); }

GeneratingModel make_generating_model(double g_lo, double g_hi, double beta0) {
  const int big_l = 8;
  const int d = big_l * big_l;
  GridSpec spec = GridSpec::from_band_limit(big_l);
  GeneratingModel gen;
  EmulatorModel& m = gen.model;
  m.spec = spec;
  m.band_limit = big_l;

  m.trend.spec = spec;
  m.trend.config.harmonics = 2;
  m.trend.config.period = 12;
  m.trend.values.assign(spec.points() * 9, 0.0);
  gen.sigma_loc.resize(spec.points());
  for (std::size_t loc = 0; loc < spec.points(); ++loc) {
    auto rec = m.trend.record(loc);
    rec[0] = beta0;
    rec[4] = 0.5;   // cos, annual
    rec[5] = 0.2;   // cos, semiannual
    rec[6] = -0.3;  // sin, annual
    rec[7] = 0.1;   // sin, semiannual
    gen.sigma_loc[loc] = 0.5 + 1.5 * static_cast<double>((7 * loc) % 144) / 143.0;
    rec[8] = gen.sigma_loc[loc];
  }

  m.var.band_limit = big_l;
  m.var.order = 3;
  m.var.phi.assign(3 * static_cast<std::size_t>(d), 0.0);
  for (int p = 0; p < 3; ++p) gen.phi_by_degree[p].resize(big_l);
  for (int l = 0; l < big_l; ++l) {
    double g = g_lo + (g_hi - g_lo) * l / (big_l - 1);
    gen.phi_by_degree[0][static_cast<std::size_t>(l)] = 0.60 * g;
    gen.phi_by_degree[1][static_cast<std::size_t>(l)] = 0.25 * g;
    gen.phi_by_degree[2][static_cast<std::size_t>(l)] = 0.15 * g;
  }
  gen.slot_scale2.resize(static_cast<std::size_t>(d));
  for (int idx = 0; idx < d; ++idx) {
    int l = degree_of_slot(idx);
    for (int p = 0; p < 3; ++p)
      m.var.phi[static_cast<std::size_t>(p) * d + idx] =
          gen.phi_by_degree[p][static_cast<std::size_t>(l)];
    // Mean slot carries the full per-degree innovation variance, the real and
    // imaginary slots half each; that split keeps the field isotropic.
    double u_l = 0.6 / (1.0 + 0.5 * l);
    bool mean_slot = idx == l * l;
    gen.slot_scale2[static_cast<std::size_t>(idx)] = mean_slot ? u_l : 0.5 * u_l;
  }

  m.innovation.u_hat = Eigen::MatrixXd::Zero(d, d);
  m.innovation.v = Eigen::MatrixXd::Zero(d, d);
  for (int idx = 0; idx < d; ++idx) {
    m.innovation.u_hat(idx, idx) = gen.slot_scale2[static_cast<std::size_t>(idx)];
    m.innovation.v(idx, idx) = std::sqrt(gen.slot_scale2[static_cast<std::size_t>(idx)]);
  }

  m.noise.spec = spec;
  m.noise.v2.assign(spec.points(), 0.0);
  return gen;
}

// Stationary variance multiplier per degree: sum of squared moving-average
// weights of the degree's lag polynomial.
std::vector<double> psi_energy_by_degree(const GeneratingModel& gen) {
  std::vector<double> s(gen.phi_by_degree[0].size());
  for (std::size_t l = 0; l < s.size(); ++l) {
    double phi[3] = {gen.phi_by_degree[0][l], gen.phi_by_degree[1][l], gen.phi_by_degree[2][l]};
    std::vector<double> psi = oracle::ar_psi_weights(phi);
    double acc = 0.0;
    for (double w : psi) acc += w * w;
    s[l] = acc;
  }
  return s;
}

Outcome criterion_statistical_recovery() {
  const int big_l = 8, d = 64, t_len = 5000;
  GeneratingModel gen = make_generating_model(0.2, 0.8, 1.2);
  ShtPlan plan = build_plan(gen.model.spec, big_l);
  const std::size_t points = gen.model.spec.points();

  // Model-implied residual scale after the deterministic mean is removed:
  // sigma_loc times the constant field standard deviation.
  std::vector<double> s_by_degree = psi_energy_by_degree(gen);
  double var0 = 0.0;
  for (int l = 0; l < big_l; ++l)
    var0 += 0.6 / (1.0 + 0.5 * l) * s_by_degree[static_cast<std::size_t>(l)] *
            (2.0 * l + 1.0) / (4.0 * kPi);
  const double sd0 = std::sqrt(var0);

  int failed_seeds = 0;
  int worst_phi_viol = 0;
  double worst_sigma_rms = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    FieldSeries series = emulate(gen.model, plan, {}, t_len, 1000 + seed, 1, 4);

    TrendConfig tcfg;
    tcfg.harmonics = 2;
    tcfg.period = 12;
    TrendModel trend = fit_trend(series, {}, tcfg);
    FieldSeries z = detrend(series, trend, {});
    CoeffSeries coeffs = forward_sht_batch(plan, z, 4);
    VarFit fit = fit_var(coeffs, 3);

    int phi_viol = 0;
    for (int p = 1; p <= 3; ++p)
      for (int idx = 0; idx < d; ++idx) {
        double want = gen.phi_by_degree[p - 1][static_cast<std::size_t>(degree_of_slot(idx))];
        double se = fit.phi_se[static_cast<std::size_t>(p - 1) * d + idx];
        if (std::abs(fit.model.phi_at(p, idx) - want) > 3.0 * se) ++phi_viol;
      }

    double rms = 0.0, mean_ratio = 0.0;
    for (std::size_t loc = 0; loc < points; ++loc) {
      double ratio = trend.sigma(loc) / (gen.sigma_loc[loc] * sd0);
      mean_ratio += ratio;
      rms += (ratio - 1.0) * (ratio - 1.0);
    }
    mean_ratio /= static_cast<double>(points);
    rms = std::sqrt(rms / static_cast<double>(points));

    bool seed_ok = phi_viol <= 3 && rms < 0.05 && std::abs(mean_ratio - 1.0) < 0.05;
    if (!seed_ok) ++failed_seeds;
    worst_phi_viol = std::max(worst_phi_viol, phi_viol);
    worst_sigma_rms = std::max(worst_sigma_rms, rms);
  }

  Outcome out;
  out.pass = failed_seeds <= 1;
  out.detail = fmt("20 seeds, %d failed (<=1); worst lag-coefficient misses 3/192 allowed: %d, "
                   "worst residual-scale rms dev %.3f (<0.05)",
                   failed_seeds, worst_phi_viol, worst_sigma_rms);
  return out;
}

Outcome criterion_emulation_consistency() {
  const int big_l = 8, d = 64, t_len = 48, reps = 200;
  GeneratingModel gen = make_generating_model(0.25, 0.75, 0.8);
  GridSpec spec = gen.model.spec;
  const std::size_t points = spec.points();
  ShtPlan plan = build_plan(spec, big_l);

  // Swap the diagonal innovation covariance for a dense one so the
  // cross-coefficient path is exercised, and add small-scale noise.
  Eigen::MatrixXd u(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double di = 0.3 * (1.0 + 0.2 * std::sin(0.37 * i));
      double dj = 0.3 * (1.0 + 0.2 * std::sin(0.37 * j));
      u(i, j) = di * dj * std::pow(0.7, std::abs(i - j));
    }
  std::vector<double> u_dense(static_cast<std::size_t>(d) * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) u_dense[static_cast<std::size_t>(i) * d + j] = u(i, j);

  MpCholConfig chol;
  chol.tile_size = 16;
  DenseCholResult dp = tiled_cholesky_dense(u_dense, d, chol);
  gen.model.innovation.u_hat = u;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      gen.model.innovation.v(i, j) = dp.factor[static_cast<std::size_t>(i) * d + j];
  for (std::size_t loc = 0; loc < points; ++loc) gen.model.noise.v2[loc] = 0.04;

  FieldSeries y = emulate(gen.model, plan, {}, t_len, 88, reps, 4);
  std::vector<double> means = mean_table(gen.model.trend, {}, t_len, 1);

  // Model-implied per-location variance: quadratic form of the synthesis
  // rows over the stationary coefficient covariance, plus small-scale noise.
  std::vector<double> psi_by_degree[8];
  for (int l = 0; l < big_l; ++l) {
    double phi[3] = {gen.phi_by_degree[0][static_cast<std::size_t>(l)],
                     gen.phi_by_degree[1][static_cast<std::size_t>(l)],
                     gen.phi_by_degree[2][static_cast<std::size_t>(l)]};
    psi_by_degree[l] = oracle::ar_psi_weights(phi);
  }
  double s_ll[8][8];
  for (int a = 0; a < big_l; ++a)
    for (int b = 0; b < big_l; ++b) {
      const auto& pa = psi_by_degree[a];
      const auto& pb = psi_by_degree[b];
      std::size_t len = std::min(pa.size(), pb.size());
      double acc = 0.0;
      for (std::size_t s = 0; s < len; ++s) acc += pa[s] * pb[s];
      s_ll[a][b] = acc;
    }
  // Synthesis matrix columns: unit coefficient vectors through the inverse
  // transform.
  std::vector<double> synth_cols(static_cast<std::size_t>(d) * points);
  {
    std::vector<double> coeff(static_cast<std::size_t>(d), 0.0), col(points);
    for (int idx = 0; idx < d; ++idx) {
      std::fill(coeff.begin(), coeff.end(), 0.0);
      coeff[static_cast<std::size_t>(idx)] = 1.0;
      inverse_sht(plan, coeff, col);
      for (std::size_t loc = 0; loc < points; ++loc)
        synth_cols[static_cast<std::size_t>(idx) * points + loc] = col[loc];
    }
  }
  std::vector<double> implied_var(points);
  for (std::size_t loc = 0; loc < points; ++loc) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
      double ai = synth_cols[static_cast<std::size_t>(i) * points + loc];
      if (ai == 0.0) continue;
      for (int j = 0; j < d; ++j) {
        double aj = synth_cols[static_cast<std::size_t>(j) * points + loc];
        acc += ai * aj * u(i, j) * s_ll[degree_of_slot(i)][degree_of_slot(j)];
      }
    }
    double s2 = gen.sigma_loc[loc] * gen.sigma_loc[loc];
    implied_var[loc] = s2 * (acc + 0.04);
  }

  // Replicate-level first and second moments against the known mean curve.
  int mean_viol = 0, std_viol = 0;
  double max_mean_z = 0.0, max_std_z = 0.0;
  std::vector<double> a_rep(reps), b_rep(reps);
  for (std::size_t loc = 0; loc < points; ++loc) {
    for (int r = 0; r < reps; ++r) {
      double sa = 0.0, sb = 0.0;
      for (int t = 0; t < t_len; ++t) {
        double dev = y.slice(r, t)[loc] - means[static_cast<std::size_t>(t) * points + loc];
        sa += dev;
        sb += dev * dev;
      }
      a_rep[static_cast<std::size_t>(r)] = sa / t_len;
      b_rep[static_cast<std::size_t>(r)] = sb / t_len;
    }
    double am = 0.0, bm = 0.0;
    for (int r = 0; r < reps; ++r) {
      am += a_rep[static_cast<std::size_t>(r)];
      bm += b_rep[static_cast<std::size_t>(r)];
    }
    am /= reps;
    bm /= reps;
    double av = 0.0, bv = 0.0;
    for (int r = 0; r < reps; ++r) {
      av += (a_rep[static_cast<std::size_t>(r)] - am) * (a_rep[static_cast<std::size_t>(r)] - am);
      bv += (b_rep[static_cast<std::size_t>(r)] - bm) * (b_rep[static_cast<std::size_t>(r)] - bm);
    }
    av /= reps - 1;
    bv /= reps - 1;
    double z_mean = am / std::sqrt(av / reps);
    double z_std = (bm - implied_var[loc]) / std::sqrt(bv / reps);
    max_mean_z = std::max(max_mean_z, std::abs(z_mean));
    max_std_z = std::max(max_std_z, std::abs(z_std));
    if (std::abs(z_mean) > 3.0) ++mean_viol;
    if (std::abs(z_std) > 3.0) ++std_viol;
  }

  // Same draw through a half-precision-stored factor of the same covariance.
  chol.variant = PrecisionVariant::kDpHp;
  DenseCholResult hp = tiled_cholesky_dense(u_dense, d, chol);
  EmulatorModel hp_model = gen.model;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      hp_model.innovation.v(i, j) = hp.factor[static_cast<std::size_t>(i) * d + j];
  FieldSeries y_hp = emulate(hp_model, plan, {}, t_len, 88, reps, 4);

  double worst_ratio_dev = 0.0;
  for (std::size_t loc = 0; loc < points; ++loc) {
    double s_dp = 0.0, s_hp = 0.0;
    for (int r = 0; r < reps; ++r)
      for (int t = 0; t < t_len; ++t) {
        double m = means[static_cast<std::size_t>(t) * points + loc];
        double e1 = y.slice(r, t)[loc] - m;
        double e2 = y_hp.slice(r, t)[loc] - m;
        s_dp += e1 * e1;
        s_hp += e2 * e2;
      }
    double ratio = std::sqrt(s_hp / s_dp);
    worst_ratio_dev = std::max(worst_ratio_dev, std::abs(ratio - 1.0));
  }

  // Two-per-screen allowance: at 144 locations a 3-sigma screen is expected
  // to flag a fraction of a location per run even when the model is exact.
  Outcome out;
  out.pass = mean_viol <= 2 && std_viol <= 2 && worst_ratio_dev < 0.10;
  out.detail = fmt("mean screen %d/144 over 3 SE (<=2, max |z| %.2f), "
                   "std screen %d/144 (<=2, max |z| %.2f), hp/dp std ratio dev %.3g (<0.1)",
                   mean_viol, max_mean_z, std_viol, max_std_z, worst_ratio_dev);
  return out;
}

// AR(1)-in-coefficients training series with a seasonal cycle, used by the
// determinism criterion.
FieldSeries synth_training_series(GridSpec spec, int big_l, int t_len, int r_len,
                                  std::uint64_t seed) {
  ShtPlan plan = build_plan(spec, big_l);
  const int d = big_l * big_l;
  FieldSeries series(spec, t_len, r_len);
  detail::GaussianRng rng(seed);
  std::vector<double> coeff(static_cast<std::size_t>(d)), synth(spec.points());
  for (int r = 0; r < r_len; ++r) {
    std::vector<double> state(static_cast<std::size_t>(d), 0.0);
    for (int t = 0; t < t_len; ++t) {
      for (int i = 0; i < d; ++i) {
        double scale = 0.5 / (1.0 + degree_of_slot(i));
        state[static_cast<std::size_t>(i)] =
            0.55 * state[static_cast<std::size_t>(i)] + scale * rng.normal();
        coeff[static_cast<std::size_t>(i)] = state[static_cast<std::size_t>(i)];
      }
      inverse_sht(plan, coeff, synth);
      auto s = series.slice(r, t);
      double season = 1.1 * std::cos(2.0 * kPi * (t + 1) / 12.0);
      for (std::size_t loc = 0; loc < spec.points(); ++loc)
        s[loc] = 1.7 + season + synth[loc] + 0.05 * rng.normal();
    }
  }
  return series;
}

Outcome criterion_determinism() {
  const int big_l = 6;
  GridSpec spec = GridSpec::from_band_limit(big_l);
  FieldSeries series = synth_training_series(spec, big_l, 240, 2, 91);

  auto bundle_dir = [](int threads) {
    return std::filesystem::temp_directory_path() /
           ("sphemu_accept_det_" + std::to_string(threads));
  };
  bool bundles_equal = true;
  for (int threads : {1, 4}) {
    TrainConfig config;
    config.band_limit = big_l;
    config.trend.harmonics = 2;
    config.trend.period = 12;
    config.var_order = 2;
    config.chol.tile_size = 16;
    config.chol.workers = threads;
    config.threads = threads;
    EmulatorModel model = train(series, {}, config);
    auto dir = bundle_dir(threads);
    std::filesystem::remove_all(dir);
    save_bundle(dir.string(), model, config, series.t_len, series.r_len);
  }
  for (const char* name : {"trend.bin", "var.bin", "ucov.bin", "noise.bin", "provenance.json"})
    bundles_equal =
        bundles_equal && file_bytes(bundle_dir(1) / name) == file_bytes(bundle_dir(4) / name);

  EmulatorModel model = load_bundle(bundle_dir(1).string());
  ShtPlan plan = build_plan(spec, big_l);
  auto emu_path = [](int threads) {
    return std::filesystem::temp_directory_path() /
           ("sphemu_accept_emu_" + std::to_string(threads) + ".sphf");
  };
  for (int threads : {1, 4}) {
    FieldSeries out = emulate(model, plan, {}, 64, 11, 3, threads);
    write_sphf(emu_path(threads).string(), out, big_l);
  }
  bool emulations_equal = file_bytes(emu_path(1)) == file_bytes(emu_path(4));

  Outcome out;
  out.pass = bundles_equal && emulations_equal;
  out.detail = fmt("bundle files byte-identical across 1 vs 4 threads: %s; "
                   "emulation files byte-identical: %s",
                   bundles_equal ? "yes" : "no", emulations_equal ? "yes" : "no");
  return out;
}

Outcome criterion_scaling() {
  const unsigned hw = std::thread::hardware_concurrency();

  GridSpec spec = GridSpec::from_band_limit(32);
  ShtPlan plan = build_plan(spec, 32);
  FieldSeries series(spec, 64, 1);
  detail::GaussianRng rng(1);
  for (double& v : series.values) v = rng.normal();
  auto time_batch = [&](int threads) {
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      auto t0 = std::chrono::steady_clock::now();
      CoeffSeries coeffs = forward_sht_batch(plan, series, threads);
      best = std::min(best, seconds_since(t0));
      if (coeffs.values.empty()) std::abort();
    }
    return best;
  };
  time_batch(1);  // warm the plan and caches
  double sht_t1 = time_batch(1);
  double sht_t4 = time_batch(4);
  double sht_speedup = sht_t1 / sht_t4;

  const int n = 4096;
  std::vector<double> a = make_spd_test_matrix(n, 1);
  auto time_chol = [&](int workers) {
    MpCholConfig config;
    config.tile_size = 128;
    config.workers = workers;
    auto t0 = std::chrono::steady_clock::now();
    DenseCholResult res = tiled_cholesky_dense(a, n, config);
    double t = seconds_since(t0);
    if (res.factor.empty()) std::abort();
    return t;
  };
  double chol_t1 = time_chol(1);
  double chol_t4 = time_chol(4);
  double chol_speedup = chol_t1 / chol_t4;

  Outcome out;
  out.pass = sht_speedup >= 2.0 && chol_speedup >= 2.0;
  out.detail = fmt("batch transform %.2fs -> %.2fs, speedup %.2fx (>=2); "
                   "factorization %.1fs -> %.1fs, speedup %.2fx (>=2); %u hardware threads",
                   sht_t1, sht_t4, sht_speedup, chol_t1, chol_t4, chol_speedup, hw);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <criterion 1..10>\n", argv[0]);
    return 2;
  }
  int n = std::atoi(argv[1]);
  Outcome out;
  try {
    switch (n) {
      case 1: out = criterion_transform_exactness(); break;
      case 2: out = criterion_quadrature_agreement(); break;
      case 3: out = criterion_wigner(); break;
      case 4: out = criterion_line_integrals(); break;
      case 5: out = criterion_resolution_table(); break;
      case 6: out = criterion_cholesky_fidelity(); break;
      case 7: out = criterion_statistical_recovery(); break;
      case 8: out = criterion_emulation_consistency(); break;
      case 9: out = criterion_determinism(); break;
      case 10: out = criterion_scaling(); break;
      default:
        std::fprintf(stderr, "usage: %s <criterion 1..10>\n", argv[0]);
        return 2;
    }
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("exception: ") + e.what();
  }
  std::printf("criterion %d %s: %s\n", n, out.pass ? "PASS" : "FAIL", out.detail.c_str());
  return out.pass ? 0 : 1;
}
