#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>

#include "sphemu/grid.hpp"
#include "sphemu/mpchol.hpp"
#include "sphemu/pipeline.hpp"
#include "sphemu/sht.hpp"
#include "sphemu/stochastic.hpp"
#include "sphemu/version.hpp"
#include "sphemu/wigner.hpp"

namespace py = pybind11;
using namespace sphemu;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

GridSpec spec_from_shape(py::ssize_t n_theta, py::ssize_t n_phi) {
  GridSpec spec{static_cast<int>(n_theta), static_cast<int>(n_phi)};
  spec.validate();
  return spec;
}

// Accepts (t, theta, phi) or (r, t, theta, phi) layouts.
FieldSeries series_from_array(const Array& data) {
  auto buf = data.request();
  int r_len = 1, t_len = 1;
  py::ssize_t n_theta, n_phi;
  if (buf.ndim == 4) {
    r_len = static_cast<int>(buf.shape[0]);
    t_len = static_cast<int>(buf.shape[1]);
    n_theta = buf.shape[2];
    n_phi = buf.shape[3];
  } else if (buf.ndim == 3) {
    t_len = static_cast<int>(buf.shape[0]);
    n_theta = buf.shape[1];
    n_phi = buf.shape[2];
  } else {
    throw std::invalid_argument("expected a (t, theta, phi) or (r, t, theta, phi) array");
  }
  FieldSeries series(spec_from_shape(n_theta, n_phi), t_len, r_len);
  std::memcpy(series.values.data(), buf.ptr, series.values.size() * sizeof(double));
  return series;
}

Array array_from_series(const FieldSeries& series) {
  Array out({static_cast<py::ssize_t>(series.r_len), static_cast<py::ssize_t>(series.t_len),
             static_cast<py::ssize_t>(series.spec.n_theta),
             static_cast<py::ssize_t>(series.spec.n_phi)});
  std::memcpy(out.mutable_data(), series.values.data(), series.values.size() * sizeof(double));
  return out;
}

int band_limit_of_coeffs(py::ssize_t count) {
  int big_l = static_cast<int>(std::lround(std::sqrt(static_cast<double>(count))));
  if (static_cast<py::ssize_t>(big_l) * big_l != count)
    throw std::invalid_argument("coefficient length must be a perfect square");
  return big_l;
}

Array py_forward_sht(const Array& field, int band_limit) {
  auto buf = field.request();
  if (buf.ndim != 2) throw std::invalid_argument("expected a (theta, phi) array");
  GridSpec spec = spec_from_shape(buf.shape[0], buf.shape[1]);
  if (band_limit == 0) band_limit = spec.max_band_limit();
  ShtPlan plan = build_plan(spec, band_limit);
  EquiangularField f(spec);
  std::memcpy(f.values.data(), buf.ptr, f.values.size() * sizeof(double));
  HarmonicVector coeffs = forward_sht(plan, f);
  Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(coeffs.values.size())});
  std::memcpy(out.mutable_data(), coeffs.values.data(), coeffs.values.size() * sizeof(double));
  return out;
}

Array py_inverse_sht(const Array& coeffs, int n_theta, int n_phi) {
  auto buf = coeffs.request();
  if (buf.ndim != 1) throw std::invalid_argument("expected a flat coefficient array");
  HarmonicVector vec;
  vec.band_limit = band_limit_of_coeffs(buf.shape[0]);
  vec.values.assign(static_cast<const double*>(buf.ptr),
                    static_cast<const double*>(buf.ptr) + buf.shape[0]);
  GridSpec target = n_theta > 0 ? spec_from_shape(n_theta, n_phi)
                                : GridSpec::from_band_limit(vec.band_limit);
  EquiangularField f = target.admissible(vec.band_limit)
                           ? inverse_sht(build_plan(target, vec.band_limit), vec)
                           : synth_bandlimited(vec, target);
  Array out({static_cast<py::ssize_t>(target.n_theta), static_cast<py::ssize_t>(target.n_phi)});
  std::memcpy(out.mutable_data(), f.values.data(), f.values.size() * sizeof(double));
  return out;
}

py::dict py_resolution_summary(int band_limit) {
  ResolutionSummary s = resolution_summary(band_limit);
  py::dict d;
  d["band_limit"] = s.band_limit;
  d["degrees_per_cell"] = s.degrees_per_cell;
  d["km_per_cell"] = s.km_per_cell;
  d["grid_points"] = s.grid_points;
  return d;
}

py::tuple py_tiled_cholesky(const Array& a, const std::string& variant, int tile_size,
                            int workers, int band_width_dp, double sp_fraction) {
  auto buf = a.request();
  if (buf.ndim != 2 || buf.shape[0] != buf.shape[1])
    throw std::invalid_argument("expected a square matrix");
  int n = static_cast<int>(buf.shape[0]);
  MpCholConfig config;
  config.variant = variant_from_string(variant);
  config.tile_size = tile_size;
  config.workers = workers;
  config.band_width_dp = band_width_dp;
  config.sp_fraction = sp_fraction;
  DenseCholResult res = tiled_cholesky_dense(
      std::span<const double>(static_cast<const double*>(buf.ptr),
                              static_cast<std::size_t>(n) * n),
      n, config);
  Array factor({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(n)});
  std::memcpy(factor.mutable_data(), res.factor.data(), res.factor.size() * sizeof(double));
  return py::make_tuple(factor, res.stats.to_json());
}

Array py_make_spd_matrix(int n, std::uint64_t seed) {
  std::vector<double> a = make_spd_test_matrix(n, seed);
  Array out({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(n)});
  std::memcpy(out.mutable_data(), a.data(), a.size() * sizeof(double));
  return out;
}

// Trained model plus enough context to draw from it; the transform plan is
// rebuilt per call because it holds non-copyable FFT state.
class Emulator {
 public:
  explicit Emulator(EmulatorModel model) : model_(std::move(model)) {}

  static Emulator train_from(const Array& data, int harmonics, int period, int var_order,
                             int band_limit, int threads) {
    FieldSeries series = series_from_array(data);
    TrainConfig config;
    config.band_limit = band_limit;
    config.trend.harmonics = harmonics;
    config.trend.period = period;
    config.var_order = var_order;
    config.threads = threads;
    config.chol.workers = threads;
    return Emulator(train(series, {}, config));
  }

  static Emulator load(const std::string& dir) { return Emulator(load_bundle(dir)); }

  void save(const std::string& dir) const {
    TrainConfig config;
    config.band_limit = model_.band_limit;
    config.trend = model_.trend.config;
    config.var_order = model_.var.order;
    save_bundle(dir, model_, config);
  }

  Array emulate_steps(int t_out, std::uint64_t seed, int replicates, int threads,
                      std::int64_t t_start) const {
    ShtPlan plan = build_plan(model_.spec, model_.band_limit);
    FieldSeries out = emulate(model_, plan, {}, t_out, seed, replicates, threads, t_start);
    return array_from_series(out);
  }

  int band_limit() const { return model_.band_limit; }
  py::tuple grid() const { return py::make_tuple(model_.spec.n_theta, model_.spec.n_phi); }

 private:
  EmulatorModel model_;
};

}  // namespace

PYBIND11_MODULE(_sphemu, m) {
  m.doc() = "Spherical harmonic transforms and stochastic climate field emulation.";

  m.def("resolution_summary", &py_resolution_summary, py::arg("band_limit"),
        "Cell size and point count of the tight grid for a band limit.");
  m.def(
      "max_band_limit",
      [](int n_theta, int n_phi) { return spec_from_shape(n_theta, n_phi).max_band_limit(); },
      py::arg("n_theta"), py::arg("n_phi"),
      "Largest band limit a (n_theta, n_phi) equiangular grid resolves exactly.");

  m.def("forward_sht", &py_forward_sht, py::arg("field"), py::arg("band_limit") = 0,
        "Analyze a (theta, phi) field into packed real harmonic coefficients.");
  m.def("inverse_sht", &py_inverse_sht, py::arg("coeffs"), py::arg("n_theta") = 0,
        py::arg("n_phi") = 0,
        "Synthesize packed coefficients on a grid (tight grid by default).");

  m.def(
      "wigner_d_half_pi",
      [](int l, int m2, int m) {
        auto tables = build_wigner_tables(l + 1);
        return tables->d_half_pi(l, m2, m);
      },
      py::arg("l"), py::arg("m2"), py::arg("m"),
      "Wigner d-function at the half pi rotation angle.");

  m.def("tiled_cholesky", &py_tiled_cholesky, py::arg("a"), py::arg("variant") = "dp",
        py::arg("tile_size") = 128, py::arg("workers") = 1, py::arg("band_width_dp") = 1,
        py::arg("sp_fraction") = 0.05,
        "Tiled Cholesky factorization; returns (lower_factor, stats_json).");
  m.def("make_spd_matrix", &py_make_spd_matrix, py::arg("n"), py::arg("seed") = 1,
        "Seeded symmetric positive definite benchmark matrix.");

  m.def(
      "read_sphf",
      [](const std::string& path) {
        int band_limit = 0;
        FieldSeries series = read_sphf(path, &band_limit);
        return py::make_tuple(array_from_series(series), band_limit);
      },
      py::arg("path"), "Read a gridded field series; returns (array, band_limit).");
  m.def(
      "write_sphf",
      [](const std::string& path, const Array& data, int band_limit) {
        write_sphf(path, series_from_array(data), band_limit);
      },
      py::arg("path"), py::arg("data"), py::arg("band_limit") = 0,
      "Write a (t, theta, phi) or (r, t, theta, phi) array as a field series file.");

  py::class_<Emulator>(m, "Emulator")
      .def_static("train", &Emulator::train_from, py::arg("data"), py::arg("harmonics") = 2,
                  py::arg("period") = 12, py::arg("var_order") = 2, py::arg("band_limit") = 0,
                  py::arg("threads") = 1,
                  "Fit trend, lag and innovation models to a gridded series.")
      .def_static("load", &Emulator::load, py::arg("dir"))
      .def("save", &Emulator::save, py::arg("dir"))
      .def("emulate", &Emulator::emulate_steps, py::arg("t_out"), py::arg("seed") = 1,
           py::arg("replicates") = 1, py::arg("threads") = 1, py::arg("t_start") = 1,
           "Draw replicate series; returns an (r, t, theta, phi) array.")
      .def_property_readonly("band_limit", &Emulator::band_limit)
      .def_property_readonly("grid", &Emulator::grid);

  m.attr("__version__") = kVersion;
}
