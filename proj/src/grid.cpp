#include "sphemu/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "sphemu/io_util.hpp"

namespace sphemu {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr std::uint32_t kSphfVersion = 1;
}  // namespace

GridSpec GridSpec::from_band_limit(int band_limit) {
  if (band_limit < 1) throw std::invalid_argument("band limit must be positive");
  return GridSpec{band_limit + 1, 2 * band_limit};
}

double GridSpec::theta(int i) const { return kPi * i / (n_theta - 1); }

double GridSpec::phi(int j) const { return 2.0 * kPi * j / n_phi; }

int GridSpec::max_band_limit() const {
  return std::min(n_theta - 1, (n_phi + 1) / 2);
}

bool GridSpec::admissible(int band_limit) const {
  return band_limit >= 1 && band_limit <= max_band_limit();
}

void GridSpec::validate() const {
  if (n_theta < 2) throw std::invalid_argument("grid needs at least two latitude rings");
  if (n_phi < 1) throw std::invalid_argument("grid needs at least one longitude point");
}

ResolutionSummary resolution_summary(int band_limit) {
  if (band_limit < 2) throw std::invalid_argument("band limit must be at least 2");
  ResolutionSummary s;
  s.band_limit = band_limit;
  s.degrees_per_cell = 180.0 / band_limit;
  s.km_per_cell = 180.0 * 111.2 / band_limit;
  s.grid_points = static_cast<std::int64_t>(band_limit - 1) * (2 * band_limit);
  return s;
}

std::span<double> FieldSeries::slice(int r, int t) {
  return {values.data() + (static_cast<std::size_t>(r) * t_len + t) * slice_stride(),
          slice_stride()};
}

std::span<const double> FieldSeries::slice(int r, int t) const {
  return {values.data() + (static_cast<std::size_t>(r) * t_len + t) * slice_stride(),
          slice_stride()};
}

void FieldSeries::validate() const {
  spec.validate();
  if (t_len < 1 || r_len < 1) throw std::invalid_argument("series needs t_len, r_len >= 1");
  if (values.size() != static_cast<std::size_t>(r_len) * t_len * spec.points())
    throw std::invalid_argument("series buffer does not match its dimensions");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("series contains non-finite samples");
}

void write_sphf(const std::string& path, const FieldSeries& series, int band_limit) {
  series.validate();
  io::BinaryWriter w(path);
  w.magic("SPHF");
  w.u32(kSphfVersion);
  w.u32(static_cast<std::uint32_t>(series.spec.n_theta));
  w.u32(static_cast<std::uint32_t>(series.spec.n_phi));
  w.u32(static_cast<std::uint32_t>(band_limit));
  w.u32(static_cast<std::uint32_t>(series.t_len));
  w.u32(static_cast<std::uint32_t>(series.r_len));
  w.f64_span(series.values);
  w.close();
}

FieldSeries read_sphf(const std::string& path, int* band_limit_out) {
  io::BinaryReader r(path);
  r.expect_magic("SPHF");
  if (r.u32() != kSphfVersion) throw std::runtime_error(path + ": unsupported SPHF version");
  FieldSeries series;
  series.spec.n_theta = static_cast<int>(r.u32());
  series.spec.n_phi = static_cast<int>(r.u32());
  int band_limit = static_cast<int>(r.u32());
  series.t_len = static_cast<int>(r.u32());
  series.r_len = static_cast<int>(r.u32());
  if (series.spec.n_theta < 2 || series.spec.n_phi < 1 || series.t_len < 1 ||
      series.r_len < 1 || series.spec.n_theta > (1 << 20) || series.spec.n_phi > (1 << 21) ||
      static_cast<std::int64_t>(series.t_len) * series.r_len > (std::int64_t{1} << 32))
    throw std::runtime_error(path + ": implausible SPHF dimensions");
  series.values.resize(static_cast<std::size_t>(series.r_len) * series.t_len *
                       series.spec.points());
  r.f64_span(series.values);
  r.expect_eof();
  series.validate();
  if (band_limit > 0 && !series.spec.admissible(band_limit))
    throw std::runtime_error(path + ": band limit exceeds what the grid resolves");
  if (band_limit_out) *band_limit_out = band_limit;
  return series;
}

void write_csv_slice(const std::string& path, const FieldSeries& series, int r, int t) {
  series.validate();
  if (r < 0 || r >= series.r_len || t < 0 || t >= series.t_len)
    throw std::invalid_argument("slice index out of range");
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path);
  std::fputs("theta,phi,value\n", f);
  auto s = series.slice(r, t);
  for (int i = 0; i < series.spec.n_theta; ++i)
    for (int j = 0; j < series.spec.n_phi; ++j)
      std::fprintf(f, "%.17g,%.17g,%.17g\n", series.spec.theta(i), series.spec.phi(j),
                   s[static_cast<std::size_t>(i) * series.spec.n_phi + j]);
  if (std::fclose(f) != 0) throw std::runtime_error("write failed for " + path);
}

namespace {

// Second derivatives of the uniform-knot cubic spline with not-a-knot ends.
// Eliminating M_0 = 2 M_1 - M_2 and M_{n-1} = 2 M_{n-2} - M_{n-3} from the
// standard interior equations leaves a tridiagonal system over M_1..M_{n-2}
// whose first and last rows reduce to 6 M = r.
void spline_m_not_a_knot(const double* y, int n, double h, double* m,
                         std::vector<double>& scratch) {
  const double inv_h2 = 6.0 / (h * h);
  const int k = n - 2;  // unknowns M_1 .. M_{n-2}
  scratch.resize(2 * static_cast<std::size_t>(k));
  double* diag = scratch.data();
  double* rhs = diag + k;
  for (int i = 1; i <= n - 2; ++i)
    rhs[i - 1] = inv_h2 * (y[i - 1] - 2.0 * y[i] + y[i + 1]);

  auto sub = [k](int i) { return i == k - 1 ? 0.0 : 1.0; };
  auto sup = [](int i) { return i == 0 ? 0.0 : 1.0; };
  auto base = [k](int i) { return (i == 0 || i == k - 1) ? 6.0 : 4.0; };

  diag[0] = base(0);
  for (int i = 1; i < k; ++i) {
    double mlt = sub(i) / diag[i - 1];
    diag[i] = base(i) - mlt * sup(i - 1);
    rhs[i] -= mlt * rhs[i - 1];
  }
  m[k] = rhs[k - 1] / diag[k - 1];
  for (int i = k - 2; i >= 0; --i) m[i + 1] = (rhs[i] - sup(i) * m[i + 2]) / diag[i];
  m[0] = 2.0 * m[1] - m[2];
  m[n - 1] = 2.0 * m[n - 2] - m[n - 3];
}

// Cyclic system M_{i-1} + 4 M_i + M_{i+1} = r_i (indices mod n) via the
// Sherman-Morrison rank-one update of the corner-free tridiagonal solve.
void spline_m_periodic(const double* y, int n, double h, double* m,
                       std::vector<double>& scratch) {
  const double inv_h2 = 6.0 / (h * h);
  scratch.assign(5 * static_cast<std::size_t>(n), 0.0);
  double* rhs = scratch.data();
  double* diag = rhs + n;
  double* sol = diag + n;
  double* z = sol + n;
  double* u = z + n;
  for (int i = 0; i < n; ++i) {
    double ym = y[(i + n - 1) % n], yp = y[(i + 1) % n];
    rhs[i] = inv_h2 * (ym - 2.0 * y[i] + yp);
  }
  const double gamma = -4.0;
  // A = B + u v^T with u = (gamma, 0..0, 1), v = (1, 0..0, 1/gamma).
  auto solve = [&](const double* b, double* x) {
    diag[0] = 4.0 - gamma;
    x[0] = b[0];
    for (int i = 1; i < n; ++i) {
      double base = (i == n - 1) ? 4.0 - 1.0 / gamma : 4.0;
      double mlt = 1.0 / diag[i - 1];
      diag[i] = base - mlt;
      x[i] = b[i] - mlt * x[i - 1];
    }
    x[n - 1] /= diag[n - 1];
    for (int i = n - 2; i >= 0; --i) x[i] = (x[i] - x[i + 1]) / diag[i];
  };
  solve(rhs, sol);
  u[0] = gamma;
  u[n - 1] = 1.0;
  solve(u, z);
  double vy = sol[0] + sol[n - 1] / gamma;
  double vz = z[0] + z[n - 1] / gamma;
  double factor = vy / (1.0 + vz);
  for (int i = 0; i < n; ++i) m[i] = sol[i] - factor * z[i];
}

double spline_eval(const double* y, const double* m, int i, double t, double h) {
  double a = 1.0 - t;
  return a * y[i] + t * y[i + 1] +
         (h * h / 6.0) * ((a * a * a - a) * m[i] + (t * t * t - t) * m[i + 1]);
}

}  // namespace

EquiangularField upsample(const EquiangularField& field, GridSpec target) {
  const GridSpec& src = field.spec;
  src.validate();
  target.validate();
  if (src.n_theta < 4 || src.n_phi < 4)
    throw std::invalid_argument("upsample needs a source grid of at least 4x4");
  if (target.n_theta < src.n_theta || target.n_phi < src.n_phi)
    throw std::invalid_argument("upsample target must not be coarser than the source");

  const double h_phi = 2.0 * kPi / src.n_phi;
  const double h_theta = kPi / (src.n_theta - 1);
  std::vector<double> scratch;

  // Longitude pass: periodic splines per source ring.
  std::vector<double> mid(static_cast<std::size_t>(src.n_theta) * target.n_phi);
  std::vector<double> row(src.n_phi + 1), m_phi(src.n_phi + 1);
  for (int i = 0; i < src.n_theta; ++i) {
    const double* ring = field.values.data() + static_cast<std::size_t>(i) * src.n_phi;
    spline_m_periodic(ring, src.n_phi, h_phi, m_phi.data(), scratch);
    std::copy(ring, ring + src.n_phi, row.begin());
    row[src.n_phi] = ring[0];
    m_phi[src.n_phi] = m_phi[0];
    for (int j = 0; j < target.n_phi; ++j) {
      double x = target.phi(j) / h_phi;
      int cell = std::min(static_cast<int>(x), src.n_phi - 1);
      mid[static_cast<std::size_t>(i) * target.n_phi + j] =
          spline_eval(row.data(), m_phi.data(), cell, x - cell, h_phi);
    }
  }

  // Latitude pass: not-a-knot splines per target meridian.
  EquiangularField out(target);
  std::vector<double> col(src.n_theta), m_theta(src.n_theta);
  for (int j = 0; j < target.n_phi; ++j) {
    for (int i = 0; i < src.n_theta; ++i)
      col[i] = mid[static_cast<std::size_t>(i) * target.n_phi + j];
    spline_m_not_a_knot(col.data(), src.n_theta, h_theta, m_theta.data(), scratch);
    for (int i = 0; i < target.n_theta; ++i) {
      double x = target.theta(i) / h_theta;
      int cell = std::min(static_cast<int>(x), src.n_theta - 2);
      out.at(i, j) = spline_eval(col.data(), m_theta.data(), cell, x - cell, h_theta);
    }
  }
  return out;
}

}  // namespace sphemu
