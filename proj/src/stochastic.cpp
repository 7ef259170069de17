#include "sphemu/stochastic.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sphemu/io_util.hpp"
#include "sphemu/rng.hpp"
#include "sphemu/thread_pool.hpp"

namespace sphemu {

namespace {
constexpr int kCovBlockRows = 256;
constexpr int kBurnInPerOrder = 10;

// Largest companion-matrix eigenvalue magnitude of one scalar lag polynomial.
double companion_spectral_radius(const double* phi, int order) {
  if (order == 0) return 0.0;
  if (order == 1) return std::abs(phi[0]);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(order, order);
  for (int p = 0; p < order; ++p) c(0, p) = phi[p];
  for (int r = 1; r < order; ++r) c(r, r - 1) = 1.0;
  return c.eigenvalues().cwiseAbs().maxCoeff();
}
}  // namespace

VarFit fit_var(const CoeffSeries& coeffs, int order) {
  if (order < 0) throw std::invalid_argument("lag order must be non-negative");
  const int t_len = coeffs.t_len;
  const int r_len = coeffs.r_len;
  const std::size_t d = coeffs.slice_stride();
  if (t_len <= order)
    throw std::invalid_argument("series too short for the requested lag order");

  VarFit fit;
  fit.model.band_limit = coeffs.band_limit;
  fit.model.order = order;
  fit.model.phi.assign(static_cast<std::size_t>(order) * d, 0.0);
  fit.phi_se.assign(static_cast<std::size_t>(order) * d, 0.0);
  const int rows_per_rep = t_len - order;
  const std::int64_t n_rows = static_cast<std::int64_t>(r_len) * rows_per_rep;
  fit.residuals.resize(n_rows, static_cast<Eigen::Index>(d));

  if (order == 0) {
    // Keep the pooled demeaned series as the innovation sample.
    for (std::size_t idx = 0; idx < d; ++idx) {
      double mean = 0.0;
      for (int r = 0; r < r_len; ++r)
        for (int t = 0; t < t_len; ++t) mean += coeffs.slice(r, t)[idx];
      mean /= static_cast<double>(n_rows);
      for (int r = 0; r < r_len; ++r)
        for (int t = 0; t < t_len; ++t)
          fit.residuals(static_cast<Eigen::Index>(r) * t_len + t,
                        static_cast<Eigen::Index>(idx)) = coeffs.slice(r, t)[idx] - mean;
    }
  } else {
    Eigen::MatrixXd a(order, order);
    Eigen::VectorXd rhs(order), x_row(order), phi(order);
    for (std::size_t idx = 0; idx < d; ++idx) {
      a.setZero();
      rhs.setZero();
      for (int r = 0; r < r_len; ++r)
        for (int t = order; t < t_len; ++t) {
          for (int p = 0; p < order; ++p) x_row(p) = coeffs.slice(r, t - 1 - p)[idx];
          double y = coeffs.slice(r, t)[idx];
          a.noalias() += x_row * x_row.transpose();
          rhs.noalias() += x_row * y;
        }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
      lu.setThreshold(1e-13);
      bool degenerate = lu.rank() < order;
      if (degenerate) {
        phi.setZero();
        ++fit.model.zeroed_count;
      } else {
        phi = lu.solve(rhs);
      }
      for (int p = 0; p < order; ++p)
        fit.model.phi[static_cast<std::size_t>(p) * d + idx] = phi(p);

      double rss = 0.0;
      for (int r = 0; r < r_len; ++r)
        for (int t = order; t < t_len; ++t) {
          double pred = 0.0;
          for (int p = 0; p < order; ++p) pred += phi(p) * coeffs.slice(r, t - 1 - p)[idx];
          double e = coeffs.slice(r, t)[idx] - pred;
          fit.residuals(static_cast<Eigen::Index>(r) * rows_per_rep + (t - order),
                        static_cast<Eigen::Index>(idx)) = e;
          rss += e * e;
        }
      if (!degenerate && n_rows > order) {
        double s2 = rss / static_cast<double>(n_rows - order);
        Eigen::MatrixXd a_inv = lu.inverse();
        for (int p = 0; p < order; ++p)
          fit.phi_se[static_cast<std::size_t>(p) * d + idx] =
              std::sqrt(std::max(0.0, s2 * a_inv(p, p)));
      }
      if (companion_spectral_radius(phi.data(), order) >= 1.0 - 1e-8)
        ++fit.model.unstable_count;
    }
  }
  fit.residual_mean_norm = fit.residuals.colwise().mean().norm();
  return fit;
}

InnovationModel estimate_innovation_covariance(const Eigen::MatrixXd& residuals, int r_len,
                                               int t_len, int order,
                                               const MpCholConfig& chol_config,
                                               int threads) {
  const std::int64_t n_rows = residuals.rows();
  const int d = static_cast<int>(residuals.cols());
  if (n_rows < 2 || d < 1) throw std::invalid_argument("residual sample is too small");
  if (n_rows != static_cast<std::int64_t>(r_len) * (t_len - order))
    throw std::invalid_argument("residual row count does not match r_len*(t_len-order)");

  // Fixed-size blocks reduced in file order keep the sum independent of the
  // thread count.
  const std::int64_t n_blocks = (n_rows + kCovBlockRows - 1) / kCovBlockRows;
  const std::int64_t wave = 32;
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(d, d);
  std::vector<Eigen::MatrixXd> partial(static_cast<std::size_t>(std::min(wave, n_blocks)));
  for (std::int64_t w0 = 0; w0 < n_blocks; w0 += wave) {
    std::int64_t w1 = std::min(n_blocks, w0 + wave);
    detail::parallel_for(w1 - w0, threads, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t b = lo; b < hi; ++b) {
        std::int64_t row0 = (w0 + b) * kCovBlockRows;
        std::int64_t rows = std::min<std::int64_t>(kCovBlockRows, n_rows - row0);
        auto block = residuals.middleRows(row0, rows);
        partial[static_cast<std::size_t>(b)] = block.transpose() * block;
      }
    });
    for (std::int64_t b = 0; b < w1 - w0; ++b) u += partial[static_cast<std::size_t>(b)];
  }
  u /= static_cast<double>(n_rows);
  u = ((u + u.transpose()) * 0.5).eval();

  double mean_diag = u.diagonal().mean();
  if (!(mean_diag > 0.0))
    throw std::runtime_error("innovation covariance has a non-positive mean diagonal");

  InnovationModel model;
  model.u_hat = u;
  double nugget = (n_rows < d) ? 1e-8 * mean_diag : 0.0;
  const double cap = 1e-2 * mean_diag;
  std::vector<double> dense(static_cast<std::size_t>(d) * d);
  while (true) {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        dense[static_cast<std::size_t>(i) * d + j] = u(i, j) + (i == j ? nugget : 0.0);
    try {
      DenseCholResult res = tiled_cholesky_dense(dense, d, chol_config);
      model.nugget = nugget;
      model.factored_variant = chol_config.variant;
      model.factor_stats = res.stats;
      model.v.resize(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          model.v(i, j) = res.factor[static_cast<std::size_t>(i) * d + j];
      return model;
    } catch (const NotPositiveDefiniteError&) {
      double next = (nugget == 0.0) ? 1e-8 * mean_diag : 10.0 * nugget;
      if (next > cap)
        throw std::runtime_error(
            "innovation covariance is not positive definite even with the largest "
            "allowed diagonal inflation");
      nugget = next;
    }
  }
}

NoiseField fit_noise_field(const FieldSeries& detrended, const FieldSeries& reconstructed) {
  detrended.validate();
  reconstructed.validate();
  if (!(detrended.spec == reconstructed.spec) || detrended.t_len != reconstructed.t_len ||
      detrended.r_len != reconstructed.r_len)
    throw std::invalid_argument("detrended and reconstructed series differ in shape");
  NoiseField noise;
  noise.spec = detrended.spec;
  const std::size_t points = detrended.spec.points();
  noise.v2.assign(points, 0.0);
  for (int r = 0; r < detrended.r_len; ++r)
    for (int t = 0; t < detrended.t_len; ++t) {
      auto a = detrended.slice(r, t);
      auto b = reconstructed.slice(r, t);
      for (std::size_t loc = 0; loc < points; ++loc) {
        double e = a[loc] - b[loc];
        noise.v2[loc] += e * e;
      }
    }
  double inv = 1.0 / (static_cast<double>(detrended.r_len) * detrended.t_len);
  for (double& v : noise.v2) v *= inv;
  return noise;
}

void EmulatorModel::validate() const {
  spec.validate();
  if (band_limit < 1 || !spec.admissible(band_limit))
    throw std::invalid_argument("model band limit is not resolved by its grid");
  const std::size_t d = static_cast<std::size_t>(band_limit) * band_limit;
  if (!(trend.spec == spec)) throw std::invalid_argument("trend grid differs from model grid");
  if (trend.values.size() != spec.points() * trend.record_stride())
    throw std::invalid_argument("trend parameter block has the wrong size");
  if (var.band_limit != band_limit || var.phi.size() != static_cast<std::size_t>(var.order) * d)
    throw std::invalid_argument("lag coefficient block has the wrong size");
  if (innovation.u_hat.rows() != static_cast<Eigen::Index>(d) ||
      innovation.u_hat.cols() != static_cast<Eigen::Index>(d) ||
      innovation.v.rows() != static_cast<Eigen::Index>(d) ||
      innovation.v.cols() != static_cast<Eigen::Index>(d))
    throw std::invalid_argument("innovation covariance has the wrong size");
  if (!(noise.spec == spec) || noise.v2.size() != spec.points())
    throw std::invalid_argument("noise field has the wrong size");
}

FieldSeries emulate(const EmulatorModel& model, const ShtPlan& plan,
                    const ForcingTrajectory& forcing, int t_out, std::uint64_t seed,
                    int r_len, int threads, std::int64_t t_start) {
  model.validate();
  if (!(plan.spec == model.spec) || plan.band_limit != model.band_limit)
    throw std::invalid_argument("transform plan does not match the model");
  if (t_out < 1 || r_len < 1) throw std::invalid_argument("need t_out, r_len >= 1");

  const int d = model.band_limit * model.band_limit;
  const int order = model.var.order;
  const int burn = kBurnInPerOrder * order;
  const std::size_t points = model.spec.points();
  auto means = mean_table(model.trend, forcing, t_out, t_start);

  std::vector<double> root_v2(points);
  for (std::size_t loc = 0; loc < points; ++loc) root_v2[loc] = std::sqrt(model.noise.v2[loc]);

  FieldSeries out(model.spec, t_out, r_len);
  detail::GaussianRng rng(seed);
  Eigen::VectorXd eta(d), xi(d);
  std::vector<Eigen::VectorXd> state(order, Eigen::VectorXd::Zero(d));
  Eigen::MatrixXd draws(t_out, d);

  for (int r = 0; r < r_len; ++r) {
    for (auto& s : state) s.setZero();
    // Innovation draws and the lag recursion run serially so the stream
    // position never depends on the thread count.
    for (int step = 0; step < burn + t_out; ++step) {
      for (int i = 0; i < d; ++i) eta(i) = rng.normal();
      xi.noalias() = model.innovation.v * eta;
      Eigen::VectorXd f = xi;
      for (int p = 0; p < order; ++p)
        for (int i = 0; i < d; ++i)
          f(i) += model.var.phi[static_cast<std::size_t>(p) * d + i] * state[p](i);
      for (int p = order - 1; p > 0; --p) state[p].swap(state[p - 1]);
      if (order > 0) state[0] = f;
      if (step >= burn) draws.row(step - burn) = f.transpose();
    }
    // Small-scale noise, drawn serially into the output buffer.
    for (int t = 0; t < t_out; ++t) {
      auto slice = out.slice(r, t);
      for (std::size_t loc = 0; loc < points; ++loc) slice[loc] = rng.normal();
    }
    // Synthesis and assembly touch disjoint slices.
    detail::parallel_for(t_out, threads, [&](std::int64_t lo, std::int64_t hi) {
      ShtWorkspace ws;
      std::vector<double> coeff(d), synth(points);
      for (std::int64_t t = lo; t < hi; ++t) {
        for (int i = 0; i < d; ++i) coeff[static_cast<std::size_t>(i)] = draws(t, i);
        inverse_sht(plan, coeff, synth, &ws);
        auto slice = out.slice(r, static_cast<int>(t));
        const double* m = means.data() + static_cast<std::size_t>(t) * points;
        for (std::size_t loc = 0; loc < points; ++loc) {
          double eps = root_v2[loc] * slice[loc];
          slice[loc] = m[loc] + model.trend.sigma(loc) * (synth[loc] + eps);
        }
      }
    });
  }
  return out;
}

void write_varm(const std::string& path, const VarModel& model) {
  io::BinaryWriter w(path);
  w.magic("VARM");
  w.u32(static_cast<std::uint32_t>(model.order));
  w.u32(static_cast<std::uint32_t>(model.band_limit));
  w.f64_span(model.phi);
  w.close();
}

VarModel read_varm(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("VARM");
  VarModel model;
  model.order = static_cast<int>(r.u32());
  model.band_limit = static_cast<int>(r.u32());
  if (model.band_limit < 1 || model.band_limit > (1 << 16) || model.order < 0 ||
      model.order > (1 << 16))
    throw std::runtime_error(path + ": implausible VARM dimensions");
  model.phi.resize(static_cast<std::size_t>(model.order) * model.band_limit * model.band_limit);
  r.f64_span(model.phi);
  r.expect_eof();
  return model;
}

void write_ucov(const std::string& path, const InnovationModel& model) {
  const int d = static_cast<int>(model.u_hat.rows());
  io::BinaryWriter w(path);
  w.magic("UCOV");
  w.u32(static_cast<std::uint32_t>(d));
  w.f64(model.nugget);
  std::vector<double> tri(static_cast<std::size_t>(d) * (d + 1) / 2);
  std::size_t at = 0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) tri[at++] = model.v(i, j);
  w.f64_span(tri);
  // Trailing extension: the factorization variant and the raw covariance.
  w.u32(static_cast<std::uint32_t>(model.factored_variant));
  at = 0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) tri[at++] = model.u_hat(i, j);
  w.f64_span(tri);
  w.close();
}

InnovationModel read_ucov(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("UCOV");
  int d = static_cast<int>(r.u32());
  if (d < 1 || d > (1 << 16)) throw std::runtime_error(path + ": implausible UCOV dimension");
  InnovationModel model;
  model.nugget = r.f64();
  std::vector<double> tri(static_cast<std::size_t>(d) * (d + 1) / 2);
  r.f64_span(tri);
  model.v.setZero(d, d);
  std::size_t at = 0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) model.v(i, j) = tri[at++];
  std::uint32_t variant = r.u32();
  if (variant > 3) throw std::runtime_error(path + ": implausible UCOV variant");
  model.factored_variant = static_cast<PrecisionVariant>(variant);
  r.f64_span(tri);
  model.u_hat.setZero(d, d);
  at = 0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) {
      model.u_hat(i, j) = tri[at];
      model.u_hat(j, i) = tri[at];
      ++at;
    }
  r.expect_eof();
  return model;
}

void write_nois(const std::string& path, const NoiseField& noise) {
  io::BinaryWriter w(path);
  w.magic("NOIS");
  w.u32(static_cast<std::uint32_t>(noise.spec.n_theta));
  w.u32(static_cast<std::uint32_t>(noise.spec.n_phi));
  w.f64_span(noise.v2);
  w.close();
}

NoiseField read_nois(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("NOIS");
  NoiseField noise;
  noise.spec.n_theta = static_cast<int>(r.u32());
  noise.spec.n_phi = static_cast<int>(r.u32());
  noise.spec.validate();
  noise.v2.resize(noise.spec.points());
  r.f64_span(noise.v2);
  r.expect_eof();
  return noise;
}

}  // namespace sphemu
