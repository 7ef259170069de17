#include "sphemu/sht.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sphemu/fft.hpp"
#include "sphemu/io_util.hpp"
#include "sphemu/rng.hpp"
#include "sphemu/thread_pool.hpp"

namespace sphemu {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// i^{-m} for m >= 0.
std::complex<double> inv_i_pow(int m) {
  switch (m & 3) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, -1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, 1.0};
  }
}
}  // namespace

std::complex<double> i_integral(long long q) {
  if (q & 1) {
    if (q == 1) return {0.0, kPi / 2.0};
    if (q == -1) return {0.0, -kPi / 2.0};
    return {0.0, 0.0};
  }
  return {2.0 / (1.0 - static_cast<double>(q) * static_cast<double>(q)), 0.0};
}

std::complex<double> HarmonicVector::coeff(int l, int m) const {
  if (l < 0 || l >= band_limit || std::abs(m) > l) throw std::out_of_range("coeff index");
  if (m == 0) return {values[index_mean(l)], 0.0};
  int am = std::abs(m);
  std::complex<double> z{values[index_re(l, am)], values[index_im(l, am)]};
  if (m > 0) return z;
  return (am & 1) ? -std::conj(z) : std::conj(z);
}

void HarmonicVector::set_coeff(int l, int m, std::complex<double> z) {
  if (l < 0 || l >= band_limit || m < 0 || m > l) throw std::out_of_range("coeff index");
  if (m == 0) {
    values[index_mean(l)] = z.real();
  } else {
    values[index_re(l, m)] = z.real();
    values[index_im(l, m)] = z.imag();
  }
}

double HarmonicVector::parseval_energy() const {
  double e = 0.0;
  for (int l = 0; l < band_limit; ++l) {
    double v = values[index_mean(l)];
    e += v * v;
    for (int m = 1; m <= l; ++m) {
      double re = values[index_re(l, m)], im = values[index_im(l, m)];
      e += 2.0 * (re * re + im * im);
    }
  }
  return e;
}

std::span<double> CoeffSeries::slice(int r, int t) {
  return {values.data() + (static_cast<std::size_t>(r) * t_len + t) * slice_stride(),
          slice_stride()};
}

std::span<const double> CoeffSeries::slice(int r, int t) const {
  return {values.data() + (static_cast<std::size_t>(r) * t_len + t) * slice_stride(),
          slice_stride()};
}

void write_sphc(const std::string& path, const CoeffSeries& series) {
  if (series.band_limit < 1 || series.t_len < 1 || series.r_len < 1 ||
      series.values.size() !=
          static_cast<std::size_t>(series.r_len) * series.t_len * series.slice_stride())
    throw std::invalid_argument("coefficient series dimensions are inconsistent");
  io::BinaryWriter w(path);
  w.magic("SPHC");
  w.u32(static_cast<std::uint32_t>(series.band_limit));
  w.u32(static_cast<std::uint32_t>(series.t_len));
  w.u32(static_cast<std::uint32_t>(series.r_len));
  w.f64_span(series.values);
  w.close();
}

CoeffSeries read_sphc(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("SPHC");
  CoeffSeries s;
  s.band_limit = static_cast<int>(r.u32());
  s.t_len = static_cast<int>(r.u32());
  s.r_len = static_cast<int>(r.u32());
  if (s.band_limit < 1 || s.band_limit > (1 << 16) || s.t_len < 1 || s.r_len < 1 ||
      static_cast<std::int64_t>(s.t_len) * s.r_len > (std::int64_t{1} << 32))
    throw std::runtime_error(path + ": implausible SPHC dimensions");
  s.values.resize(static_cast<std::size_t>(s.r_len) * s.t_len * s.slice_stride());
  r.f64_span(s.values);
  r.expect_eof();
  return s;
}

ShtPlan build_plan(GridSpec spec, int band_limit, std::shared_ptr<const WignerTables> tables) {
  spec.validate();
  if (!spec.admissible(band_limit))
    throw std::invalid_argument("grid " + std::to_string(spec.n_theta) + "x" +
                                std::to_string(spec.n_phi) +
                                " does not resolve band limit " + std::to_string(band_limit));
  if (tables && tables->band_limit() < band_limit)
    throw std::invalid_argument("Wigner tables cover a smaller band limit than requested");
  ShtPlan plan;
  plan.spec = spec;
  plan.band_limit = band_limit;
  plan.wigner = tables ? std::move(tables) : build_wigner_tables(band_limit);

  const int big_l = band_limit;
  const int cols = 2 * big_l - 1;
  const int n_ext = plan.ext_len();

  plan.e_phi.resize(static_cast<std::size_t>(spec.n_phi) * cols);
  for (int j = 0; j < spec.n_phi; ++j) {
    double p = spec.phi(j);
    for (int c = 0; c < cols; ++c) {
      int m = c - (big_l - 1);
      plan.e_phi[static_cast<std::size_t>(j) * cols + c] =
          std::polar(1.0 / spec.n_phi, -m * p);
    }
  }

  plan.i_mat.resize(static_cast<std::size_t>(cols) * cols);
  for (int c1 = 0; c1 < cols; ++c1)
    for (int c2 = 0; c2 < cols; ++c2)
      plan.i_mat[static_cast<std::size_t>(c1) * cols + c2] =
          i_integral((c1 - (big_l - 1)) + static_cast<long long>(c2 - (big_l - 1)));

  plan.d_parity.resize(big_l);
  for (int m = 0; m < big_l; ++m) plan.d_parity[m] = (m & 1) ? -1.0 : 1.0;

  auto weight_at = [&](int m2, double theta) {
    std::complex<double> acc{0.0, 0.0};
    for (int c1 = 0; c1 < cols; ++c1) {
      int mp = c1 - (big_l - 1);
      acc += i_integral(static_cast<long long>(mp) + m2) * std::polar(1.0, -mp * theta);
    }
    return acc / static_cast<double>(n_ext);
  };
  plan.w1.resize(static_cast<std::size_t>(cols) * spec.n_theta);
  plan.w2.resize(static_cast<std::size_t>(cols) * std::max(0, spec.n_theta - 2));
  for (int c2 = 0; c2 < cols; ++c2) {
    int m2 = c2 - (big_l - 1);
    for (int i = 0; i < spec.n_theta; ++i)
      plan.w1[static_cast<std::size_t>(c2) * spec.n_theta + i] = weight_at(m2, spec.theta(i));
    for (int i = 1; i + 1 < spec.n_theta; ++i)
      plan.w2[static_cast<std::size_t>(c2) * (spec.n_theta - 2) + (i - 1)] =
          weight_at(m2, kTwoPi - spec.theta(i));
  }

  plan.ring_analysis = &detail::Dft::get(spec.n_phi, -1);
  plan.ring_synthesis = &detail::Dft::get(spec.n_phi, +1);
  plan.ext_analysis = &detail::Dft::get(n_ext, -1);
  plan.ext_synthesis = &detail::Dft::get(n_ext, +1);
  return plan;
}

namespace {

void resize_workspace(const ShtPlan& plan, ShtWorkspace& ws) {
  const int big_l = plan.band_limit;
  const int cols = 2 * big_l - 1;
  ws.ring_in.resize(plan.spec.n_phi);
  ws.ring_out.resize(plan.spec.n_phi);
  ws.g.resize(static_cast<std::size_t>(big_l) * plan.spec.n_theta);
  ws.ext.resize(plan.ext_len());
  ws.spec1.resize(plan.ext_len());
  ws.j.resize(cols);
  ws.k.resize(big_l);
}

// Shared tail of both analysis routes: contract J(m, m2) rows against the
// Wigner products and pack the real coefficient layout.
void contract_row(const ShtPlan& plan, int m, const std::complex<double>* j_row,
                  std::span<double> out) {
  const int big_l = plan.band_limit;
  const int mid = big_l - 1;
  const WignerTables& wt = *plan.wigner;
  const double par = plan.d_parity[m];
  const std::complex<double> phase = kTwoPi * inv_i_pow(m);
  for (int l = m; l < big_l; ++l) {
    std::complex<double> acc = wt.q(l, m, 0) * j_row[mid];
    for (int m2 = 1; m2 <= l; ++m2)
      acc += wt.q(l, m, m2) * (j_row[mid + m2] + par * j_row[mid - m2]);
    std::complex<double> f = phase * acc;
    if (m == 0) {
      out[HarmonicVector::index_mean(l)] = f.real();
    } else {
      out[HarmonicVector::index_re(l, m)] = f.real();
      out[HarmonicVector::index_im(l, m)] = f.imag();
    }
  }
}

// Longitude analysis into ws.g: g[m * n_theta + i] = sum_j f(i,j) e^{-im phi_j} / n_phi.
void ring_stage(const ShtPlan& plan, std::span<const double> field, ShtWorkspace& ws) {
  const int n_theta = plan.spec.n_theta;
  const int n_phi = plan.spec.n_phi;
  const int big_l = plan.band_limit;
  for (int i = 0; i < n_theta; ++i) {
    const double* row = field.data() + static_cast<std::size_t>(i) * n_phi;
    for (int jj = 0; jj < n_phi; ++jj) ws.ring_in[jj] = {row[jj], 0.0};
    (*plan.ring_analysis)(ws.ring_in.data(), ws.ring_out.data());
    for (int m = 0; m < big_l; ++m)
      ws.g[static_cast<std::size_t>(m) * n_theta + i] = ws.ring_out[m] / static_cast<double>(n_phi);
  }
}

}  // namespace

void forward_sht(const ShtPlan& plan, std::span<const double> field,
                 std::span<double> coeffs_out, ShtWorkspace* ws_in) {
  if (field.size() != plan.spec.points()) throw std::invalid_argument("field size mismatch");
  if (coeffs_out.size() != HarmonicVector::packed_size(plan.band_limit))
    throw std::invalid_argument("coefficient size mismatch");
  ShtWorkspace local;
  ShtWorkspace& ws = ws_in ? *ws_in : local;
  resize_workspace(plan, ws);

  const int n_theta = plan.spec.n_theta;
  const int big_l = plan.band_limit;
  const int cols = 2 * big_l - 1;
  const int mid = big_l - 1;
  const int n_ext = plan.ext_len();

  ring_stage(plan, field, ws);

  for (int m = 0; m < big_l; ++m) {
    const std::complex<double>* g = ws.g.data() + static_cast<std::size_t>(m) * n_theta;
    double par = plan.d_parity[m];
    for (int i = 0; i < n_theta; ++i) ws.ext[i] = g[i];
    for (int k = 1; k <= n_theta - 2; ++k) ws.ext[n_theta - 1 + k] = par * g[n_theta - 1 - k];
    (*plan.ext_analysis)(ws.ext.data(), ws.spec1.data());

    // J(m, m2) = sum_{m'} K(m, m') I(m' + m2) over the resolved orders.
    for (int c2 = 0; c2 < cols; ++c2) {
      std::complex<double> acc{0.0, 0.0};
      for (int c1 = 0; c1 < cols; ++c1) {
        int mp = c1 - mid;
        std::complex<double> k_val =
            ws.spec1[(mp % n_ext + n_ext) % n_ext] / static_cast<double>(n_ext);
        acc += k_val * plan.i_mat[static_cast<std::size_t>(c1) * cols + c2];
      }
      ws.j[c2] = acc;
    }
    contract_row(plan, m, ws.j.data(), coeffs_out);
  }
}

void forward_sht_via_weights(const ShtPlan& plan, std::span<const double> field,
                             std::span<double> coeffs_out) {
  if (field.size() != plan.spec.points()) throw std::invalid_argument("field size mismatch");
  if (coeffs_out.size() != HarmonicVector::packed_size(plan.band_limit))
    throw std::invalid_argument("coefficient size mismatch");
  const int n_theta = plan.spec.n_theta;
  const int n_phi = plan.spec.n_phi;
  const int big_l = plan.band_limit;
  const int cols = 2 * big_l - 1;
  const int mid = big_l - 1;

  // Longitude stage through the stored phase table.
  std::vector<std::complex<double>> g(static_cast<std::size_t>(big_l) * n_theta);
  for (int i = 0; i < n_theta; ++i) {
    const double* row = field.data() + static_cast<std::size_t>(i) * n_phi;
    for (int m = 0; m < big_l; ++m) {
      std::complex<double> acc{0.0, 0.0};
      for (int jj = 0; jj < n_phi; ++jj)
        acc += row[jj] * plan.e_phi[static_cast<std::size_t>(jj) * cols + (mid + m)];
      g[static_cast<std::size_t>(m) * n_theta + i] = acc;
    }
  }

  std::vector<std::complex<double>> j_row(cols);
  for (int m = 0; m < big_l; ++m) {
    const std::complex<double>* gm = g.data() + static_cast<std::size_t>(m) * n_theta;
    double par = plan.d_parity[m];
    for (int c2 = 0; c2 < cols; ++c2) {
      std::complex<double> acc{0.0, 0.0};
      for (int i = 0; i < n_theta; ++i)
        acc += gm[i] * plan.w1[static_cast<std::size_t>(c2) * n_theta + i];
      for (int i = 1; i + 1 < n_theta; ++i)
        acc += par * gm[i] * plan.w2[static_cast<std::size_t>(c2) * (n_theta - 2) + (i - 1)];
      j_row[c2] = acc;
    }
    contract_row(plan, m, j_row.data(), coeffs_out);
  }
}

void inverse_sht(const ShtPlan& plan, std::span<const double> coeffs,
                 std::span<double> field_out, ShtWorkspace* ws_in) {
  if (coeffs.size() != HarmonicVector::packed_size(plan.band_limit))
    throw std::invalid_argument("coefficient size mismatch");
  if (field_out.size() != plan.spec.points()) throw std::invalid_argument("field size mismatch");
  ShtWorkspace local;
  ShtWorkspace& ws = ws_in ? *ws_in : local;
  resize_workspace(plan, ws);

  const int n_theta = plan.spec.n_theta;
  const int n_phi = plan.spec.n_phi;
  const int big_l = plan.band_limit;
  const int n_ext = plan.ext_len();
  const WignerTables& wt = *plan.wigner;

  for (int m = 0; m < big_l; ++m) {
    // K(m, m') = sum_l q(l, m, m') z_{l,m} for m' >= 0.
    for (int mp = 0; mp < big_l; ++mp) {
      std::complex<double> acc{0.0, 0.0};
      for (int l = std::max(m, mp); l < big_l; ++l) {
        std::complex<double> z =
            (m == 0) ? std::complex<double>{coeffs[HarmonicVector::index_mean(l)], 0.0}
                     : std::complex<double>{coeffs[HarmonicVector::index_re(l, m)],
                                            coeffs[HarmonicVector::index_im(l, m)]};
        acc += wt.q(l, m, mp) * z;
      }
      ws.k[mp] = acc;
    }
    std::fill(ws.spec1.begin(), ws.spec1.end(), std::complex<double>{0.0, 0.0});
    const std::complex<double> phase = inv_i_pow(m);
    const double par = plan.d_parity[m];
    ws.spec1[0] = phase * ws.k[0];
    for (int mp = 1; mp < big_l; ++mp) {
      ws.spec1[mp] = phase * ws.k[mp];
      ws.spec1[n_ext - mp] = phase * (par * ws.k[mp]);
    }
    (*plan.ext_synthesis)(ws.spec1.data(), ws.ext.data());
    for (int i = 0; i < n_theta; ++i)
      ws.g[static_cast<std::size_t>(m) * n_theta + i] = ws.ext[i];
  }

  for (int i = 0; i < n_theta; ++i) {
    std::fill(ws.ring_in.begin(), ws.ring_in.end(), std::complex<double>{0.0, 0.0});
    ws.ring_in[0] = ws.g[i];
    for (int m = 1; m < big_l; ++m) {
      std::complex<double> v = ws.g[static_cast<std::size_t>(m) * n_theta + i];
      ws.ring_in[m] += v;
      ws.ring_in[n_phi - m] += std::conj(v);
    }
    (*plan.ring_synthesis)(ws.ring_in.data(), ws.ring_out.data());
    double* row = field_out.data() + static_cast<std::size_t>(i) * n_phi;
    for (int jj = 0; jj < n_phi; ++jj) row[jj] = ws.ring_out[jj].real();
  }
}

HarmonicVector forward_sht(const ShtPlan& plan, const EquiangularField& field) {
  if (!(field.spec == plan.spec)) throw std::invalid_argument("field grid differs from plan");
  HarmonicVector out(plan.band_limit);
  forward_sht(plan, field.values, out.values);
  return out;
}

EquiangularField inverse_sht(const ShtPlan& plan, const HarmonicVector& coeffs) {
  if (coeffs.band_limit != plan.band_limit)
    throw std::invalid_argument("coefficient band limit differs from plan");
  EquiangularField out(plan.spec);
  inverse_sht(plan, coeffs.values, out.values);
  return out;
}

CoeffSeries forward_sht_batch(const ShtPlan& plan, const FieldSeries& series, int threads) {
  series.validate();
  if (!(series.spec == plan.spec)) throw std::invalid_argument("series grid differs from plan");
  CoeffSeries out(plan.band_limit, series.t_len, series.r_len);
  std::int64_t n = static_cast<std::int64_t>(series.t_len) * series.r_len;
  detail::parallel_for(n, threads, [&](std::int64_t lo, std::int64_t hi) {
    ShtWorkspace ws;
    for (std::int64_t s = lo; s < hi; ++s) {
      int r = static_cast<int>(s / series.t_len);
      int t = static_cast<int>(s % series.t_len);
      forward_sht(plan, series.slice(r, t), out.slice(r, t), &ws);
    }
  });
  return out;
}

FieldSeries inverse_sht_batch(const ShtPlan& plan, const CoeffSeries& series, int threads) {
  if (series.band_limit != plan.band_limit)
    throw std::invalid_argument("series band limit differs from plan");
  FieldSeries out(plan.spec, series.t_len, series.r_len);
  std::int64_t n = static_cast<std::int64_t>(series.t_len) * series.r_len;
  detail::parallel_for(n, threads, [&](std::int64_t lo, std::int64_t hi) {
    ShtWorkspace ws;
    for (std::int64_t s = lo; s < hi; ++s) {
      int r = static_cast<int>(s / series.t_len);
      int t = static_cast<int>(s % series.t_len);
      inverse_sht(plan, series.slice(r, t), out.slice(r, t), &ws);
    }
  });
  return out;
}

std::vector<double> normalized_legendre_all(int band_limit, double theta) {
  const int big_l = band_limit;
  std::vector<double> p(static_cast<std::size_t>(big_l) * (big_l + 1) / 2, 0.0);
  const double ct = std::cos(theta), st = std::sin(theta);
  auto at = [&p](int l, int m) -> double& {
    return p[static_cast<std::size_t>(l) * (l + 1) / 2 + m];
  };
  at(0, 0) = 1.0 / std::sqrt(4.0 * kPi);
  for (int m = 1; m < big_l; ++m)
    at(m, m) = -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * st * at(m - 1, m - 1);
  for (int m = 0; m + 1 < big_l; ++m)
    at(m + 1, m) = std::sqrt(2.0 * m + 3.0) * ct * at(m, m);
  for (int m = 0; m < big_l; ++m) {
    for (int l = m + 2; l < big_l; ++l) {
      double a = std::sqrt((4.0 * l * l - 1.0) / (static_cast<double>(l) * l - m * m));
      double b = std::sqrt((static_cast<double>(l - 1) * (l - 1) - m * m) /
                           (4.0 * static_cast<double>(l - 1) * (l - 1) - 1.0));
      at(l, m) = a * (ct * at(l - 1, m) - b * at(l - 2, m));
    }
  }
  return p;
}

double normalized_legendre(int l, int m, double theta) {
  if (l < 0 || m < 0 || m > l) throw std::out_of_range("Legendre index");
  auto p = normalized_legendre_all(l + 1, theta);
  return p[static_cast<std::size_t>(l) * (l + 1) / 2 + m];
}

EquiangularField synth_bandlimited(const HarmonicVector& coeffs, GridSpec target) {
  target.validate();
  const int big_l = coeffs.band_limit;
  EquiangularField out(target);
  std::vector<std::complex<double>> s_m(big_l);
  for (int i = 0; i < target.n_theta; ++i) {
    auto p = normalized_legendre_all(big_l, target.theta(i));
    for (int m = 0; m < big_l; ++m) {
      std::complex<double> acc{0.0, 0.0};
      for (int l = m; l < big_l; ++l) {
        std::complex<double> z =
            (m == 0)
                ? std::complex<double>{coeffs.values[HarmonicVector::index_mean(l)], 0.0}
                : std::complex<double>{coeffs.values[HarmonicVector::index_re(l, m)],
                                       coeffs.values[HarmonicVector::index_im(l, m)]};
        acc += p[static_cast<std::size_t>(l) * (l + 1) / 2 + m] * z;
      }
      s_m[m] = acc;
    }
    for (int j = 0; j < target.n_phi; ++j) {
      const std::complex<double> step = std::polar(1.0, target.phi(j));
      std::complex<double> e{1.0, 0.0};
      double v = s_m[0].real();
      for (int m = 1; m < big_l; ++m) {
        e *= step;
        v += 2.0 * (s_m[m] * e).real();
      }
      out.at(i, j) = v;
    }
  }
  return out;
}

HarmonicVector quadrature_oracle_sht(const std::function<double(double, double)>& f,
                                     int band_limit, int n_theta_quad) {
  if (band_limit < 1 || n_theta_quad < 3)
    throw std::invalid_argument("oracle needs a band limit and at least 3 rings");
  const int big_l = band_limit;
  const int n_phi = 2 * big_l;
  const double h = kPi / (n_theta_quad - 1);
  HarmonicVector out(big_l);
  std::vector<std::complex<double>> f_m(big_l);
  std::vector<double> ring(n_phi);
  std::vector<std::complex<double>> acc(static_cast<std::size_t>(big_l) * (big_l + 1) / 2,
                                        {0.0, 0.0});
  for (int i = 0; i < n_theta_quad; ++i) {
    double theta = h * i;
    double w = h * std::sin(theta) * ((i == 0 || i == n_theta_quad - 1) ? 0.5 : 1.0);
    if (w == 0.0) continue;
    for (int j = 0; j < n_phi; ++j) ring[j] = f(theta, kTwoPi * j / n_phi);
    for (int m = 0; m < big_l; ++m) {
      std::complex<double> s{0.0, 0.0};
      for (int j = 0; j < n_phi; ++j) s += ring[j] * std::polar(1.0, -m * kTwoPi * j / n_phi);
      f_m[m] = s * (kTwoPi / n_phi);
    }
    auto p = normalized_legendre_all(big_l, theta);
    for (int l = 0; l < big_l; ++l)
      for (int m = 0; m <= l; ++m)
        acc[static_cast<std::size_t>(l) * (l + 1) / 2 + m] +=
            w * p[static_cast<std::size_t>(l) * (l + 1) / 2 + m] * f_m[m];
  }
  for (int l = 0; l < big_l; ++l) {
    out.values[HarmonicVector::index_mean(l)] = acc[static_cast<std::size_t>(l) * (l + 1) / 2].real();
    for (int m = 1; m <= l; ++m) {
      auto z = acc[static_cast<std::size_t>(l) * (l + 1) / 2 + m];
      out.values[HarmonicVector::index_re(l, m)] = z.real();
      out.values[HarmonicVector::index_im(l, m)] = z.imag();
    }
  }
  return out;
}

HarmonicVector draw_random_coefficients(int band_limit, std::uint64_t seed) {
  if (band_limit < 1) throw std::invalid_argument("band limit must be positive");
  HarmonicVector out(band_limit);
  detail::GaussianRng rng(seed);
  for (int l = 0; l < band_limit; ++l) {
    double scale = 1.0 / (l + 1);
    std::size_t lo = HarmonicVector::index_mean(l);
    for (std::size_t idx = lo; idx <= lo + 2 * static_cast<std::size_t>(l); ++idx)
      out.values[idx] = scale * rng.normal();
  }
  return out;
}

EquiangularField synth_random_field(const ShtPlan& plan, std::uint64_t seed) {
  HarmonicVector coeffs = draw_random_coefficients(plan.band_limit, seed);
  return inverse_sht(plan, coeffs);
}

EquiangularField synth_random_field(GridSpec spec, int band_limit, std::uint64_t seed) {
  return synth_random_field(build_plan(spec, band_limit), seed);
}

double field_energy_quadrature(const EquiangularField& field) {
  const GridSpec& spec = field.spec;
  spec.validate();
  const int big_l = spec.max_band_limit();
  const int n_theta = spec.n_theta;
  const int n_phi = spec.n_phi;
  const int n_ext = 2 * n_theta - 2;
  const auto& ring_fft = detail::Dft::get(n_phi, -1);
  const auto& ext_fft = detail::Dft::get(n_ext, -1);

  std::vector<std::complex<double>> in(n_phi), out(n_phi);
  std::vector<std::complex<double>> g(static_cast<std::size_t>(2 * big_l - 1) * n_theta);
  const int mid = big_l - 1;
  for (int i = 0; i < n_theta; ++i) {
    for (int j = 0; j < n_phi; ++j)
      in[j] = {field.values[static_cast<std::size_t>(i) * n_phi + j], 0.0};
    ring_fft(in.data(), out.data());
    for (int c = 0; c < 2 * big_l - 1; ++c) {
      int m = c - mid;
      g[static_cast<std::size_t>(c) * n_theta + i] =
          out[(m % n_phi + n_phi) % n_phi] / static_cast<double>(n_phi);
    }
  }

  std::vector<std::complex<double>> ext(n_ext), spec1(n_ext);
  std::vector<std::complex<double>> kappa(2 * big_l - 1);
  double energy = 0.0;
  for (int c = 0; c < 2 * big_l - 1; ++c) {
    int m = c - mid;
    double par = (m & 1) ? -1.0 : 1.0;
    const std::complex<double>* gm = g.data() + static_cast<std::size_t>(c) * n_theta;
    for (int i = 0; i < n_theta; ++i) ext[i] = gm[i];
    for (int k = 1; k <= n_theta - 2; ++k) ext[n_theta - 1 + k] = par * gm[n_theta - 1 - k];
    ext_fft(ext.data(), spec1.data());
    for (int cc = 0; cc < 2 * big_l - 1; ++cc) {
      int mp = cc - mid;
      kappa[cc] = spec1[(mp % n_ext + n_ext) % n_ext] / static_cast<double>(n_ext);
    }
    std::complex<double> contrib{0.0, 0.0};
    for (int a = 0; a < 2 * big_l - 1; ++a)
      for (int b = 0; b < 2 * big_l - 1; ++b)
        contrib += kappa[a] * std::conj(kappa[b]) * i_integral(a - b);
    energy += contrib.real();
  }
  return kTwoPi * energy;
}

}  // namespace sphemu
