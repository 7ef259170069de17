#include "sphemu/trend.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sphemu/io_util.hpp"

namespace sphemu {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kLagWeightCutoff = 1e-12;
constexpr double kSigmaFloor = 1e-12;  // variance floor for constant locations

std::int64_t year_of(std::int64_t t, int period) { return (t + period - 1) / period; }

// The lagged forcing term needs at least one earlier year on record.
void require_lag_history(const ForcingTrajectory& forcing, std::int64_t year) {
  if (!forcing.has_year(year - 1))
    throw std::invalid_argument("lagged forcing term needs history before year " +
                                std::to_string(year));
}
}  // namespace

void TrendConfig::validate() const {
  if (period != 12 && period != 365 && period != 8760)
    throw std::invalid_argument("period must be 12, 365 or 8760 steps per year");
  if (harmonics < 0) throw std::invalid_argument("harmonics must be non-negative");
  if (2 * harmonics >= period)
    throw std::invalid_argument("harmonics must stay below half the period");
}

bool ForcingTrajectory::has_year(std::int64_t year) const {
  if (year >= 1) return year <= static_cast<std::int64_t>(x.size());
  return -year < static_cast<std::int64_t>(history.size());
}

double ForcingTrajectory::at_year(std::int64_t year) const {
  if (!has_year(year)) return 0.0;
  if (year >= 1) return x[static_cast<std::size_t>(year - 1)];
  return history[static_cast<std::size_t>(-year)];
}

double ForcingTrajectory::lagged_mean(std::int64_t year, double rho) const {
  double acc = 0.0;
  double w = 1.0;
  for (std::int64_t s = 1;; ++s) {
    if (!has_year(year - s)) break;
    acc += w * at_year(year - s);
    w *= rho;
    if (w < kLagWeightCutoff) break;
  }
  return (1.0 - rho) * acc;
}

std::span<const double> TrendModel::record(std::size_t loc) const {
  return {values.data() + loc * record_stride(), record_stride()};
}

std::span<double> TrendModel::record(std::size_t loc) {
  return {values.data() + loc * record_stride(), record_stride()};
}

double eval_mean_trend(const TrendModel& model, std::size_t loc, std::int64_t t,
                       const ForcingTrajectory& forcing) {
  if (t < 1) throw std::invalid_argument("time steps are 1-based");
  auto rec = model.record(loc);
  const int big_k = model.config.harmonics;
  const int period = model.config.period;
  double m = rec[0];
  if (!forcing.empty()) {
    std::int64_t year = year_of(t, period);
    if (rec[2] != 0.0) require_lag_history(forcing, year);
    m += rec[1] * forcing.at_year(year) + rec[2] * forcing.lagged_mean(year, rec[3]);
  }
  double base = kTwoPi * static_cast<double>(t % period) / period;
  for (int k = 1; k <= big_k; ++k)
    m += rec[4 + (k - 1)] * std::cos(base * k) + rec[4 + big_k + (k - 1)] * std::sin(base * k);
  return m;
}

namespace {

struct DesignInfo {
  bool with_forcing = false;
  int p = 0;  // column count
};

Eigen::MatrixXd build_design(int t_len, const TrendConfig& config,
                             const ForcingTrajectory& forcing, double rho,
                             const DesignInfo& info) {
  const int big_k = config.harmonics;
  Eigen::MatrixXd x(t_len, info.p);
  for (int row = 0; row < t_len; ++row) {
    std::int64_t t = row + 1;
    int c = 0;
    x(row, c++) = 1.0;
    if (info.with_forcing) {
      std::int64_t year = year_of(t, config.period);
      x(row, c++) = forcing.at_year(year);
      x(row, c++) = forcing.lagged_mean(year, rho);
    }
    double base = kTwoPi * static_cast<double>(t % config.period) / config.period;
    for (int k = 1; k <= big_k; ++k) {
      x(row, c++) = std::cos(base * k);
      x(row, c++) = std::sin(base * k);
    }
  }
  return x;
}

// Sum of squared residuals of the pooled-mean series over every location.
double profile_objective(const Eigen::MatrixXd& ybar, int t_len, const TrendConfig& config,
                         const ForcingTrajectory& forcing, double rho,
                         const DesignInfo& info) {
  Eigen::MatrixXd x = build_design(t_len, config, forcing, rho, info);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  double total = 0.0;
  Eigen::MatrixXd beta = qr.solve(ybar);
  total = (ybar - x * beta).squaredNorm();
  return total;
}

}  // namespace

TrendModel fit_trend(const FieldSeries& series, const ForcingTrajectory& forcing,
                     TrendConfig config) {
  config.validate();
  series.validate();
  const int t_len = series.t_len;
  const int r_len = series.r_len;
  const std::size_t points = series.spec.points();
  const int big_k = config.harmonics;
  if (t_len < 4 + 2 * big_k)
    throw std::invalid_argument("need at least 4 + 2*harmonics time steps to fit the trend");

  // Pooling over replicates reduces the fit to the ensemble-mean series; the
  // within-ensemble scatter only enters the residual scale.
  Eigen::MatrixXd ybar = Eigen::MatrixXd::Zero(t_len, static_cast<Eigen::Index>(points));
  for (int r = 0; r < r_len; ++r)
    for (int t = 0; t < t_len; ++t) {
      auto s = series.slice(r, t);
      for (std::size_t loc = 0; loc < points; ++loc)
        ybar(t, static_cast<Eigen::Index>(loc)) += s[loc];
    }
  ybar /= r_len;
  std::vector<double> within(points, 0.0);
  for (int r = 0; r < r_len; ++r)
    for (int t = 0; t < t_len; ++t) {
      auto s = series.slice(r, t);
      for (std::size_t loc = 0; loc < points; ++loc) {
        double d = s[loc] - ybar(t, static_cast<Eigen::Index>(loc));
        within[loc] += d * d;
      }
    }

  DesignInfo info;
  info.with_forcing = !forcing.empty();
  TrendModel model;
  model.spec = series.spec;
  model.config = config;
  model.values.assign(points * (5 + 2 * static_cast<std::size_t>(big_k)), 0.0);

  if (info.with_forcing) {
    std::int64_t last_year = year_of(t_len, config.period);
    for (std::int64_t y = 1; y <= last_year; ++y)
      if (!forcing.has_year(y))
        throw std::invalid_argument("forcing trajectory does not cover the sample years");
    // A constant forcing cannot be separated from the intercept.
    double mean = 0.0, var = 0.0;
    for (std::int64_t y = 1; y <= last_year; ++y) mean += forcing.at_year(y);
    mean /= static_cast<double>(last_year);
    for (std::int64_t y = 1; y <= last_year; ++y) {
      double d = forcing.at_year(y) - mean;
      var += d * d;
    }
    if (var <= 1e-12 * std::max(1.0, mean * mean) * last_year) {
      info.with_forcing = false;
      model.collinear_warnings = static_cast<int>(points);
    }
  }
  info.p = (info.with_forcing ? 3 : 1) + 2 * big_k;

  double rho_best = 0.0;
  if (info.with_forcing) {
    // Coarse scan, then golden-section refinement of the profiled objective.
    const double rho_max = 0.99;
    const int probes = 33;
    double best = 0.0;
    int best_i = 0;
    for (int i = 0; i < probes; ++i) {
      double rho = rho_max * i / (probes - 1);
      double obj = profile_objective(ybar, t_len, config, forcing, rho, info);
      if (i == 0 || obj < best) {
        best = obj;
        best_i = i;
      }
    }
    double lo = rho_max * std::max(0, best_i - 1) / (probes - 1);
    double hi = rho_max * std::min(probes - 1, best_i + 1) / (probes - 1);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = profile_objective(ybar, t_len, config, forcing, c, info);
    double fd = profile_objective(ybar, t_len, config, forcing, d, info);
    for (int it = 0; it < 40 && (b - a) > 1e-7; ++it) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - gr * (b - a);
        fc = profile_objective(ybar, t_len, config, forcing, c, info);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + gr * (b - a);
        fd = profile_objective(ybar, t_len, config, forcing, d, info);
      }
    }
    rho_best = 0.5 * (a + b);
  }

  Eigen::MatrixXd x = build_design(t_len, config, forcing, rho_best, info);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  Eigen::MatrixXd beta = qr.solve(ybar);
  Eigen::MatrixXd resid = ybar - x * beta;
  for (std::size_t loc = 0; loc < points; ++loc) {
    auto rec = model.record(loc);
    const auto b_col = beta.col(static_cast<Eigen::Index>(loc));
    int c = 0;
    rec[0] = b_col(c++);
    if (info.with_forcing) {
      rec[1] = b_col(c++);
      rec[2] = b_col(c++);
      rec[3] = rho_best;
    }
    for (int k = 1; k <= big_k; ++k) {
      rec[4 + (k - 1)] = b_col(c++);
      rec[4 + big_k + (k - 1)] = b_col(c++);
    }
    double rss = r_len * resid.col(static_cast<Eigen::Index>(loc)).squaredNorm() + within[loc];
    double var = rss / (static_cast<double>(r_len) * t_len);
    rec[rec.size() - 1] = std::sqrt(std::max(var, kSigmaFloor));
  }
  return model;
}

std::vector<double> mean_table(const TrendModel& model, const ForcingTrajectory& forcing,
                               int t_len, std::int64_t t_start) {
  if (t_start < 1) throw std::invalid_argument("time steps are 1-based");
  const std::size_t points = model.spec.points();
  const int big_k = model.config.harmonics;
  const int period = model.config.period;
  std::vector<double> table(static_cast<std::size_t>(t_len) * points);
  std::vector<double> cs(2 * static_cast<std::size_t>(std::max(big_k, 1)));
  for (int row = 0; row < t_len; ++row) {
    std::int64_t t = t_start + row;
    double base = kTwoPi * static_cast<double>(t % period) / period;
    for (int k = 1; k <= big_k; ++k) {
      cs[2 * (k - 1)] = std::cos(base * k);
      cs[2 * (k - 1) + 1] = std::sin(base * k);
    }
    double xv = 0.0, lv = 0.0;
    std::int64_t year = year_of(t, period);
    bool with_forcing = !forcing.empty();
    if (with_forcing) xv = forcing.at_year(year);
    double* out = table.data() + static_cast<std::size_t>(row) * points;
    for (std::size_t loc = 0; loc < points; ++loc) {
      auto rec = model.record(loc);
      double m = rec[0];
      if (with_forcing) {
        if (rec[2] != 0.0) require_lag_history(forcing, year);
        // rho is shared, so the lag average only depends on the year.
        if (loc == 0) lv = forcing.lagged_mean(year, rec[3]);
        m += rec[1] * xv + rec[2] * lv;
      }
      for (int k = 1; k <= big_k; ++k)
        m += rec[4 + (k - 1)] * cs[2 * (k - 1)] + rec[4 + big_k + (k - 1)] * cs[2 * (k - 1) + 1];
      out[loc] = m;
    }
  }
  return table;
}

FieldSeries detrend(const FieldSeries& series, const TrendModel& model,
                    const ForcingTrajectory& forcing, std::int64_t t_start) {
  series.validate();
  if (!(series.spec == model.spec)) throw std::invalid_argument("series grid differs from model");
  auto table = mean_table(model, forcing, series.t_len, t_start);
  const std::size_t points = series.spec.points();
  FieldSeries out(series.spec, series.t_len, series.r_len);
  for (int r = 0; r < series.r_len; ++r)
    for (int t = 0; t < series.t_len; ++t) {
      auto src = series.slice(r, t);
      auto dst = out.slice(r, t);
      const double* m = table.data() + static_cast<std::size_t>(t) * points;
      for (std::size_t loc = 0; loc < points; ++loc)
        dst[loc] = (src[loc] - m[loc]) / model.sigma(loc);
    }
  return out;
}

FieldSeries retrend(const FieldSeries& standardized, const TrendModel& model,
                    const ForcingTrajectory& forcing, std::int64_t t_start) {
  standardized.validate();
  if (!(standardized.spec == model.spec))
    throw std::invalid_argument("series grid differs from model");
  auto table = mean_table(model, forcing, standardized.t_len, t_start);
  const std::size_t points = standardized.spec.points();
  FieldSeries out(standardized.spec, standardized.t_len, standardized.r_len);
  for (int r = 0; r < standardized.r_len; ++r)
    for (int t = 0; t < standardized.t_len; ++t) {
      auto src = standardized.slice(r, t);
      auto dst = out.slice(r, t);
      const double* m = table.data() + static_cast<std::size_t>(t) * points;
      for (std::size_t loc = 0; loc < points; ++loc)
        dst[loc] = m[loc] + model.sigma(loc) * src[loc];
    }
  return out;
}

void write_trnd(const std::string& path, const TrendModel& model, int band_limit) {
  io::BinaryWriter w(path);
  w.magic("TRND");
  w.u32(static_cast<std::uint32_t>(band_limit));
  w.u32(static_cast<std::uint32_t>(model.spec.n_theta));
  w.u32(static_cast<std::uint32_t>(model.spec.n_phi));
  w.u32(static_cast<std::uint32_t>(model.config.harmonics));
  w.u32(static_cast<std::uint32_t>(model.config.period));
  w.f64_span(model.values);
  w.close();
}

TrendModel read_trnd(const std::string& path, int* band_limit_out) {
  io::BinaryReader r(path);
  r.expect_magic("TRND");
  int band_limit = static_cast<int>(r.u32());
  TrendModel model;
  model.spec.n_theta = static_cast<int>(r.u32());
  model.spec.n_phi = static_cast<int>(r.u32());
  model.config.harmonics = static_cast<int>(r.u32());
  model.config.period = static_cast<int>(r.u32());
  model.spec.validate();
  model.config.validate();
  model.values.resize(model.spec.points() * model.record_stride());
  r.f64_span(model.values);
  r.expect_eof();
  if (band_limit_out) *band_limit_out = band_limit;
  return model;
}

}  // namespace sphemu
