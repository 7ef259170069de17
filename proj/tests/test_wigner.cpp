#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>

#include "sphemu/wigner.hpp"

using namespace sphemu;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("sphemu_wigner_" + name)).string();
}

}  // namespace

TEST_SUITE("wigner") {

TEST_CASE("factorial sum closed forms") {
  CHECK(wigner_brute_force(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(wigner_brute_force(1, 1, 1) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(wigner_brute_force(1, 1, -1) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::abs(wigner_brute_force(1, 0, 0)) < 1e-15);
  CHECK(wigner_brute_force(1, 1, 0) == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-14));
  CHECK(wigner_brute_force(2, 2, 0) == doctest::Approx(std::sqrt(3.0 / 8.0)).epsilon(1e-14));
  CHECK(wigner_brute_force(2, 0, 0) == doctest::Approx(-0.5).epsilon(1e-14));
}

TEST_CASE("recursion matches the factorial sum") {
  const int l_max = 12;
  auto tables = build_wigner_tables(l_max + 1);
  double worst = 0.0;
  for (int l = 0; l <= l_max; ++l)
    for (int m2 = -l; m2 <= l; ++m2)
      for (int m = -l; m <= l; ++m)
        worst = std::max(worst,
                         std::abs(tables->d_half_pi(l, m2, m) - wigner_brute_force(l, m2, m)));
  CHECK(worst < 1e-12);
}

TEST_CASE("rows stay orthonormal") {
  const int big_l = 32;
  auto tables = build_wigner_tables(big_l);
  CHECK(tables->renormalization_warnings() == 0);
  double worst = 0.0;
  for (int l = 0; l < big_l; ++l)
    for (int m = 0; m <= l; ++m)
      for (int mp = m; mp <= l; ++mp) {
        double dot = 0.0;
        for (int m2 = -l; m2 <= l; ++m2)
          dot += tables->d_half_pi(l, m2, m) * tables->d_half_pi(l, m2, mp);
        worst = std::max(worst, std::abs(dot - (m == mp ? 1.0 : 0.0)));
      }
  CHECK(worst < 1e-10);
}

TEST_CASE("synthesis products") {
  auto tables = build_wigner_tables(4);
  const double q000 = 1.0 / std::sqrt(4.0 * std::numbers::pi);
  CHECK(tables->q(0, 0, 0) == doctest::Approx(q000).epsilon(1e-14));
  CHECK(tables->q(0, 0, 0) == doctest::Approx(0.2820947917738781).epsilon(1e-14));

  // q(1, 0, 1) = sqrt(3/4pi) * d^1_{1,0} * d^1_{1,0} = sqrt(3/4pi) / 2.
  const double q101 = std::sqrt(3.0 / (4.0 * std::numbers::pi)) * 0.5;
  CHECK(tables->q(1, 0, 1) == doctest::Approx(q101).epsilon(1e-14));

  // Out-of-triangle column gives zero.
  CHECK(tables->q(1, 1, 3) == 0.0);
}

TEST_CASE("cache round trip") {
  auto built = build_wigner_tables(10);
  std::string path = tmp_path("tables.wigd");
  write_wigd(path, *built);
  auto loaded = read_wigd(path);
  REQUIRE(loaded->band_limit() == 10);
  CHECK(loaded->renormalization_warnings() == built->renormalization_warnings());
  for (int l = 0; l < 10; ++l)
    for (int m2 = -l; m2 <= l; ++m2)
      for (int m = 0; m <= l; ++m)
        CHECK(loaded->d_half_pi(l, m2, m) == built->d_half_pi(l, m2, m));
  for (int l = 0; l < 10; ++l)
    for (int m = 0; m <= l; ++m)
      for (int m2 = 0; m2 <= l; ++m2) CHECK(loaded->q(l, m, m2) == built->q(l, m, m2));
}

TEST_CASE("load or build transparently uses the cache") {
  std::string path = tmp_path("cache_auto.wigd");
  std::remove(path.c_str());
  auto first = load_or_build_wigner(6, path);
  CHECK(std::filesystem::exists(path));
  auto second = load_or_build_wigner(6, path);
  CHECK(second->band_limit() == 6);
  CHECK(second->d_half_pi(5, 3, 2) == first->d_half_pi(5, 3, 2));

  // A mismatched band limit ignores the cached file.
  auto other = load_or_build_wigner(7, "");
  CHECK(other->band_limit() == 7);
}

TEST_CASE("memory cap is enforced") {
  CHECK_THROWS_AS((void)build_wigner_tables(512, 1024), std::invalid_argument);
}

}  // TEST_SUITE
