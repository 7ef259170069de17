#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sphemu/grid.hpp"
#include "sphemu/rng.hpp"
#include "sphemu/sht.hpp"
#include "sphemu/stochastic.hpp"

using namespace sphemu;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("sphemu_stoch_" + name)).string();
}

std::vector<unsigned char> file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t u32_at(const std::vector<unsigned char>& b, std::size_t off) {
  std::uint32_t v = 0;
  std::memcpy(&v, b.data() + off, 4);
  return v;
}

double f64_at(const std::vector<unsigned char>& b, std::size_t off) {
  double v = 0;
  std::memcpy(&v, b.data() + off, 8);
  return v;
}

// Diagonal AR(2) sample with per-index parameters and innovation scales.
CoeffSeries ar2_series(int band_limit, int t_len, int r_len,
                       const std::vector<double>& phi1, const std::vector<double>& phi2,
                       const std::vector<double>& scale, std::uint64_t seed) {
  CoeffSeries coeffs(band_limit, t_len, r_len);
  const std::size_t d = coeffs.slice_stride();
  detail::GaussianRng rng(seed);
  const int burn = 200;
  for (int r = 0; r < r_len; ++r) {
    std::vector<double> prev1(d, 0.0), prev2(d, 0.0);
    for (int t = -burn; t < t_len; ++t) {
      for (std::size_t i = 0; i < d; ++i) {
        double f = phi1[i] * prev1[i] + phi2[i] * prev2[i] + scale[i] * rng.normal();
        prev2[i] = prev1[i];
        prev1[i] = f;
        if (t >= 0) coeffs.slice(r, t)[i] = f;
      }
    }
  }
  return coeffs;
}

// Zero-mean emulator scaffold: unit sigma, no seasonal terms, no small-scale
// noise, so the output is exactly the synthesized coefficient process.
EmulatorModel bare_model(GridSpec spec, int band_limit, int order) {
  const std::size_t d = static_cast<std::size_t>(band_limit) * band_limit;
  EmulatorModel model;
  model.spec = spec;
  model.band_limit = band_limit;
  model.trend.spec = spec;
  model.trend.config.harmonics = 0;
  model.trend.config.period = 12;
  model.trend.values.assign(spec.points() * 5, 0.0);
  for (std::size_t loc = 0; loc < spec.points(); ++loc)
    model.trend.record(loc)[4] = 1.0;
  model.var.band_limit = band_limit;
  model.var.order = order;
  model.var.phi.assign(static_cast<std::size_t>(order) * d, 0.0);
  model.innovation.u_hat = Eigen::MatrixXd::Identity(d, d);
  model.innovation.v = Eigen::MatrixXd::Identity(d, d);
  model.noise.spec = spec;
  model.noise.v2.assign(spec.points(), 0.0);
  return model;
}

}  // namespace

TEST_SUITE("stochastic") {

TEST_CASE("lag coefficients are recovered within standard errors") {
  const int band_limit = 3;
  const std::size_t d = 9;
  std::vector<double> phi1(d), phi2(d), scale(d);
  for (std::size_t i = 0; i < d; ++i) {
    phi1[i] = 0.45 + 0.03 * static_cast<double>(i);
    phi2[i] = -0.25 + 0.02 * static_cast<double>(i);
    scale[i] = 0.5 + 0.1 * static_cast<double>(i);
  }
  CoeffSeries coeffs = ar2_series(band_limit, 3000, 2, phi1, phi2, scale, 424242);
  VarFit fit = fit_var(coeffs, 2);

  CHECK(fit.model.order == 2);
  CHECK(fit.model.band_limit == band_limit);
  CHECK(fit.model.zeroed_count == 0);
  CHECK(fit.model.unstable_count == 0);
  CHECK(fit.residuals.rows() == 2 * (3000 - 2));
  CHECK(fit.residuals.cols() == 9);
  CHECK(fit.residual_mean_norm < 0.05);
  // 18 coefficients screened at 3 standard errors; one marginal miss is
  // within expectation for a correct fit, two are not.
  int misses = 0;
  for (std::size_t i = 0; i < d; ++i) {
    CHECK(fit.phi_se[i] > 0.0);
    if (std::abs(fit.model.phi_at(1, i) - phi1[i]) >= 3.0 * fit.phi_se[i]) ++misses;
    if (std::abs(fit.model.phi_at(2, i) - phi2[i]) >= 3.0 * fit.phi_se[d + i]) ++misses;
    CHECK(std::abs(fit.model.phi_at(1, i) - phi1[i]) < 4.0 * fit.phi_se[i]);
    CHECK(std::abs(fit.model.phi_at(2, i) - phi2[i]) < 4.0 * fit.phi_se[d + i]);
  }
  CHECK(misses <= 1);
}

TEST_CASE("order zero keeps the demeaned series") {
  CoeffSeries coeffs(2, 6, 2);
  detail::GaussianRng rng(5);
  for (double& v : coeffs.values) v = rng.normal();
  VarFit fit = fit_var(coeffs, 0);
  CHECK(fit.model.phi.empty());
  CHECK(fit.residuals.rows() == 12);
  for (std::size_t idx = 0; idx < 4; ++idx) {
    double mean = 0.0;
    for (int r = 0; r < 2; ++r)
      for (int t = 0; t < 6; ++t) mean += coeffs.slice(r, t)[idx];
    mean /= 12.0;
    for (int r = 0; r < 2; ++r)
      for (int t = 0; t < 6; ++t)
        CHECK(fit.residuals(r * 6 + t, static_cast<Eigen::Index>(idx)) ==
              doctest::Approx(coeffs.slice(r, t)[idx] - mean).epsilon(1e-14));
  }
}

TEST_CASE("silent and explosive series are flagged") {
  CoeffSeries coeffs(2, 400, 1);
  // Index 0 grows linearly, which no causal lag polynomial can produce; the
  // other indices are identically zero.
  for (int t = 0; t < 400; ++t) coeffs.slice(0, t)[0] = static_cast<double>(t + 1);
  VarFit fit = fit_var(coeffs, 1);
  CHECK(fit.model.zeroed_count == 3);
  CHECK(fit.model.unstable_count == 1);
  CHECK(fit.model.phi_at(1, 0) > 1.0);
  CHECK(fit.model.phi_at(1, 1) == 0.0);
  CHECK(fit.model.phi_at(1, 2) == 0.0);
  CHECK(fit.model.phi_at(1, 3) == 0.0);
  for (double v : fit.model.phi) CHECK(std::isfinite(v));
}

TEST_CASE("covariance equals the direct normalized product") {
  const int r_len = 7, t_len = 102, order = 2, d = 6;
  const std::int64_t rows = static_cast<std::int64_t>(r_len) * (t_len - order);
  Eigen::MatrixXd resid(rows, d);
  detail::GaussianRng rng(31);
  for (Eigen::Index i = 0; i < resid.size(); ++i) resid.data()[i] = rng.normal();

  MpCholConfig chol;
  chol.tile_size = 4;
  InnovationModel model = estimate_innovation_covariance(resid, r_len, t_len, order, chol);
  Eigen::MatrixXd direct = (resid.transpose() * resid) / static_cast<double>(rows);
  CHECK((model.u_hat - direct).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(model.nugget == 0.0);
  CHECK((model.v * model.v.transpose() - model.u_hat).cwiseAbs().maxCoeff() < 1e-12);
  // Strictly lower storage of the factor.
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) CHECK(model.v(i, j) == 0.0);

  InnovationModel threaded = estimate_innovation_covariance(resid, r_len, t_len, order, chol, 3);
  CHECK(std::memcmp(model.u_hat.data(), threaded.u_hat.data(), sizeof(double) * d * d) == 0);
  CHECK(std::memcmp(model.v.data(), threaded.v.data(), sizeof(double) * d * d) == 0);
}

TEST_CASE("singular covariance escalates the diagonal nugget") {
  const int d = 8;
  Eigen::MatrixXd resid(300, d);
  detail::GaussianRng rng(17);
  for (Eigen::Index i = 0; i < resid.size(); ++i) resid.data()[i] = rng.normal();
  resid.col(7) = resid.col(3);  // exact linear dependence

  MpCholConfig chol;
  chol.tile_size = 4;
  InnovationModel model = estimate_innovation_covariance(resid, 1, 301, 1, chol);
  double mean_diag = model.u_hat.diagonal().mean();
  CHECK(model.nugget > 0.0);
  CHECK(model.nugget <= 1e-2 * mean_diag);
  Eigen::MatrixXd target =
      model.u_hat + model.nugget * Eigen::MatrixXd::Identity(d, d);
  CHECK((model.v * model.v.transpose() - target).cwiseAbs().maxCoeff() < 1e-10 * mean_diag);
}

TEST_CASE("short samples start from a positive nugget") {
  const int d = 8;
  Eigen::MatrixXd resid(4, d);
  detail::GaussianRng rng(29);
  for (Eigen::Index i = 0; i < resid.size(); ++i) resid.data()[i] = rng.normal();
  MpCholConfig chol;
  chol.tile_size = 8;
  InnovationModel model = estimate_innovation_covariance(resid, 4, 1, 0, chol);
  double mean_diag = model.u_hat.diagonal().mean();
  CHECK(model.nugget >= 0.99e-8 * mean_diag);
}

TEST_CASE("zero residuals are rejected") {
  Eigen::MatrixXd resid = Eigen::MatrixXd::Zero(8, 4);
  MpCholConfig chol;
  CHECK_THROWS_AS(
      (void)estimate_innovation_covariance(resid, 8, 1, 0, chol), std::runtime_error);
}

TEST_CASE("noise field averages the reconstruction gap") {
  GridSpec spec{3, 4};
  FieldSeries a(spec, 5, 2), b(spec, 5, 2);
  detail::GaussianRng rng(3);
  for (double& v : a.values) v = rng.normal();
  for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] = a.values[i];
  // Location 2 misses a constant offset of 0.5 in every slice.
  for (int r = 0; r < 2; ++r)
    for (int t = 0; t < 5; ++t) b.slice(r, t)[2] -= 0.5;
  NoiseField noise = fit_noise_field(a, b);
  CHECK(noise.v2[0] == 0.0);
  CHECK(noise.v2[2] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("white innovation synthesis has the projected variance") {
  GridSpec spec = GridSpec::from_band_limit(4);
  ShtPlan plan = build_plan(spec, 4);
  EmulatorModel model = bare_model(spec, 4, 1);
  model.innovation.u_hat *= 0.09;
  model.innovation.v *= 0.3;

  const int t_out = 6000;
  FieldSeries out = emulate(model, plan, {}, t_out, 99, 1);

  // Per-location variance of A f when f is white with covariance 0.09 I.
  const std::size_t points = spec.points();
  std::vector<double> expect(points, 0.0);
  std::vector<double> coeff(16, 0.0), col(points);
  for (int idx = 0; idx < 16; ++idx) {
    std::fill(coeff.begin(), coeff.end(), 0.0);
    coeff[static_cast<std::size_t>(idx)] = 1.0;
    inverse_sht(plan, coeff, col);
    for (std::size_t loc = 0; loc < points; ++loc)
      expect[loc] += 0.09 * col[loc] * col[loc];
  }

  for (std::size_t loc = 0; loc < points; ++loc) {
    double mean = 0.0, ss = 0.0;
    for (int t = 0; t < t_out; ++t) mean += out.slice(0, t)[loc];
    mean /= t_out;
    for (int t = 0; t < t_out; ++t) {
      double v = out.slice(0, t)[loc] - mean;
      ss += v * v;
    }
    double var = ss / (t_out - 1);
    CHECK(std::abs(var - expect[loc]) / expect[loc] < 0.10);
    CHECK(std::abs(mean) < 4.0 * std::sqrt(var / t_out));
  }
}

TEST_CASE("emulation is reproducible and thread independent") {
  GridSpec spec = GridSpec::from_band_limit(4);
  ShtPlan plan = build_plan(spec, 4);
  EmulatorModel model = bare_model(spec, 4, 1);
  for (double& p : model.var.phi) p = 0.5;
  model.innovation.v *= 0.7;
  model.innovation.u_hat *= 0.49;

  FieldSeries a = emulate(model, plan, {}, 24, 7, 2, 1);
  FieldSeries b = emulate(model, plan, {}, 24, 7, 2, 4);
  CHECK(a.values == b.values);

  FieldSeries c = emulate(model, plan, {}, 24, 8, 2, 1);
  CHECK(a.values != c.values);

  bool reps_differ = false;
  for (std::size_t loc = 0; loc < spec.points() && !reps_differ; ++loc)
    reps_differ = a.slice(0, 0)[loc] != a.slice(1, 0)[loc];
  CHECK(reps_differ);
}

TEST_CASE("lag model file layout") {
  VarModel model;
  model.band_limit = 3;
  model.order = 2;
  model.phi.resize(18);
  for (std::size_t i = 0; i < 18; ++i) model.phi[i] = 0.01 * static_cast<double>(i + 1);

  std::string path = tmp_path("model.varm");
  write_varm(path, model);
  auto bytes = file_bytes(path);
  CHECK(bytes.size() == 12 + 18 * 8);
  CHECK(std::memcmp(bytes.data(), "VARM", 4) == 0);
  CHECK(u32_at(bytes, 4) == 2);
  CHECK(u32_at(bytes, 8) == 3);
  CHECK(f64_at(bytes, 12) == 0.01);

  VarModel back = read_varm(path);
  CHECK(back.band_limit == 3);
  CHECK(back.order == 2);
  CHECK(back.phi == model.phi);
}

TEST_CASE("innovation file layout keeps the factor before the extension") {
  const int d = 3;
  InnovationModel model;
  model.nugget = 0.125;
  model.factored_variant = PrecisionVariant::kDpSp;
  model.v.setZero(d, d);
  model.v << 2.0, 0.0, 0.0, 1.0, 3.0, 0.0, 0.5, -1.0, 4.0;
  model.u_hat = model.v * model.v.transpose();

  std::string path = tmp_path("model.ucov");
  write_ucov(path, model);
  auto bytes = file_bytes(path);
  CHECK(bytes.size() == 4 + 4 + 8 + 6 * 8 + 4 + 6 * 8);
  CHECK(std::memcmp(bytes.data(), "UCOV", 4) == 0);
  CHECK(u32_at(bytes, 4) == 3);
  CHECK(f64_at(bytes, 8) == 0.125);
  CHECK(f64_at(bytes, 16) == 2.0);   // v(0,0)
  CHECK(f64_at(bytes, 24) == 1.0);   // v(1,0)
  CHECK(f64_at(bytes, 32) == 3.0);   // v(1,1)
  CHECK(u32_at(bytes, 64) == 1);     // variant tag after the factor
  CHECK(f64_at(bytes, 68) == 4.0);   // u_hat(0,0)

  InnovationModel back = read_ucov(path);
  CHECK(back.nugget == 0.125);
  CHECK(back.factored_variant == PrecisionVariant::kDpSp);
  CHECK((back.v - model.v).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.u_hat - model.u_hat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noise file layout") {
  NoiseField noise;
  noise.spec = GridSpec{3, 4};
  noise.v2.resize(12);
  for (std::size_t i = 0; i < 12; ++i) noise.v2[i] = 0.5 * static_cast<double>(i);

  std::string path = tmp_path("model.nois");
  write_nois(path, noise);
  auto bytes = file_bytes(path);
  CHECK(bytes.size() == 12 + 12 * 8);
  CHECK(std::memcmp(bytes.data(), "NOIS", 4) == 0);
  CHECK(u32_at(bytes, 4) == 3);
  CHECK(u32_at(bytes, 8) == 4);
  CHECK(f64_at(bytes, 20) == 0.5);

  NoiseField back = read_nois(path);
  CHECK(back.spec == noise.spec);
  CHECK(back.v2 == noise.v2);
}

}  // TEST_SUITE
