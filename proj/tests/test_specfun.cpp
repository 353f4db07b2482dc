#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include <boost/math/special_functions/bessel.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "lowdisp/specfun.hpp"

using namespace lowdisp;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// independent oracle: plain power series for J0 in long double
long double j0_oracle(long double z) {
  long double term = 1, sum = 1, q = -z * z / 4;
  for (int k = 1; k < 80; ++k) {
    term *= q / (k * (long double)k);
    sum += term;
  }
  return sum;
}

}  // namespace

TEST_CASE("J1 small argument matches the leading series terms") {
  double z = 1e-3;
  CHECK(rel(bessel_j(1, z), 5.0e-4 - 6.25e-11) < 1e-12);
}

TEST_CASE("first zero of J0 from bisection on an independent series") {
  long double a = 2.3L, b = 2.5L;
  for (int i = 0; i < 200; ++i) {
    long double m = (a + b) / 2;
    if (j0_oracle(a) * j0_oracle(m) <= 0) b = m; else a = m;
  }
  double root = static_cast<double>((a + b) / 2);
  CHECK(std::abs(root - 2.404825557695773) < 1e-12);
  CHECK(std::abs(bessel_j(0, 2.404825557695773)) < 1e-12);
}

TEST_CASE("Y1 times z tends to -2/pi") {
  double z = 1e-6;
  CHECK(rel(bessel_y(1, z) * z, -2.0 / M_PI) < 1e-6);
}

TEST_CASE("values agree with Boost.Math away from zeros") {
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> lz(std::log(1e-4), std::log(60.0));
  int checked = 0;
  for (int it = 0; it < 4000; ++it) {
    int nu = it % 9;
    double z = std::exp(lz(gen));
    double jb = boost::math::cyl_bessel_j(nu, z);
    double yb = boost::math::cyl_neumann(nu, z);
    // relative accuracy is meaningless right at a zero; compare against the local envelope
    double env = std::max(std::abs(jb), std::abs(yb));
    if (std::abs(jb) > 1e-3 * env && std::abs(jb) > 1e-290) {
      CHECK(rel(bessel_j(nu, z), jb) < 1e-12);
      ++checked;
    }
    if (std::abs(yb) > 1e-3 * env) CHECK(rel(bessel_y(nu, z), yb) < 1e-12);
  }
  CHECK(checked > 1000);
}

TEST_CASE("Wronskian") {
  for (int nu = 0; nu <= 8; ++nu)
    for (double z = 1e-4; z <= 50; z *= 1.37) {
      double w = bessel_j(nu, z) * bessel_derivative(BesselKind::Y, nu, z) -
                 bessel_derivative(BesselKind::J, nu, z) * bessel_y(nu, z);
      CHECK(rel(w, 2 / (M_PI * z)) < 1e-10);
    }
}

TEST_CASE("regime stitching at the crossovers") {
  double J[10], Y[10], J2[10], Y2[10];
  for (double z : {kSeriesLimit, kAsymptoticLimit}) {
    Regime lo = z == kSeriesLimit ? Regime::series : Regime::backward_recurrence;
    Regime hi = z == kSeriesLimit ? Regime::backward_recurrence : Regime::asymptotic;
    bessel_jy_all<double>(z, 8, lo, J, Y);
    bessel_jy_all<double>(z, 8, hi, J2, Y2);
    for (int n = 0; n <= 8; ++n) {
      CHECK(rel(J2[n], J[n]) < 1e-10);
      CHECK(rel(Y2[n], Y[n]) < 1e-10);
    }
  }
  CHECK(bessel_eval(BesselKind::J, 3, 1.0).regime == Regime::series);
  CHECK(bessel_eval(BesselKind::J, 3, 5.0).regime == Regime::backward_recurrence);
  CHECK(bessel_eval(BesselKind::Y, 3, 25.0).regime == Regime::asymptotic);
}

TEST_CASE("recurrence consistency") {
  for (int nu = 1; nu <= 7; ++nu)
    for (double z = 0.1; z <= 50; z *= 1.21) {
      double lhs = bessel_j(nu - 1, z) + bessel_j(nu + 1, z);
      double rhs = 2 * nu / z * bessel_j(nu, z);
      double scale = std::abs(bessel_j(nu - 1, z)) + std::abs(bessel_j(nu + 1, z));
      CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(std::abs(rhs), scale));
    }
}

TEST_CASE("derivative against central differences") {
  std::mt19937 gen(11);
  std::uniform_int_distribution<int> on(0, 8);
  std::uniform_real_distribution<double> oz(0.5, 40);
  for (int i = 0; i < 100; ++i) {
    int nu = on(gen);
    double z = oz(gen), h = 1e-5 * z;
    for (auto kind : {BesselKind::J, BesselKind::Y}) {
      double fd = (bessel(kind, nu, z + h) - bessel(kind, nu, z - h)) / (2 * h);
      double d = bessel_derivative(kind, nu, z);
      CHECK(std::abs(d - fd) <= 1e-6 * std::max(1.0, std::abs(d)));
    }
  }
}

TEST_CASE("hankel conjugacy, sum and large-argument modulus") {
  for (double z = 0.01; z < 100; z *= 1.5) {
    auto hp = hankel(+1, 1, z), hm = hankel(-1, 1, z);
    CHECK(std::abs(hp - std::conj(hm)) == 0.0);
  }
  CHECK(std::abs(hankel(+1, 1, 1.0) + hankel(-1, 1, 1.0) - 2 * bessel_j(1, 1.0)) < 1e-12);
  CHECK(std::abs(std::abs(hankel(+1, 1, 1e3)) * std::sqrt(1e3) - std::sqrt(2 / M_PI)) < 1e-3);
  for (int nu = 0; nu <= 8; ++nu)
    for (double z = 25; z < 1e4; z *= 2) CHECK(std::abs(hankel(+1, nu, z)) <= 2.0 / std::sqrt(1 + z));
}

TEST_CASE("omega amplitude is continuous across the asymptotic crossover") {
  double z = kAsymptoticLimit;
  auto a = omega_amplitude(+1, z);
  auto b = hankel(+1, 1, z) * std::polar(1.0, -z);
  CHECK(std::abs(a - b) < 1e-12);
  CHECK(std::abs(omega_amplitude(-1, 3.0) - std::conj(omega_amplitude(+1, 3.0))) < 1e-15);
}

TEST_CASE("series constants b1, b2") {
  const double g = 0.57721566490153286;
  CHECK(rel(y1_series_b1(), (2 * g - 1) / (2 * M_PI)) < 1e-14);
  CHECK(rel(y1_series_b2(), (2.5 - 2 * g) / (16 * M_PI)) < 1e-14);
  double z = 1e-2;
  double approx = -2 / (M_PI * z) + 2 / M_PI * std::log(z / 2) * bessel_j(1, z) + y1_series_b1() * z +
                  y1_series_b2() * z * z * z;
  CHECK(std::abs(approx - bessel_y(1, z)) < 1e-12);
}

TEST_CASE("series paths run in quad precision") {
  using quad = boost::multiprecision::cpp_bin_float_quad;
  quad z("0.3");
  quad j = bessel_j_series<quad>(1, z), y = bessel_y_series<quad>(1, z);
  quad jd = bessel_j_series<quad>(0, z) - bessel_j_series<quad>(1, z) / z;
  quad yd = bessel_y_series<quad>(0, z) - bessel_y_series<quad>(1, z) / z;
  quad w = j * yd - jd * y;
  quad expect = 2 / (boost::math::constants::pi<quad>() * z);
  CHECK(static_cast<double>(abs(w / expect - 1)) < 1e-30);
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS(bessel_j(1, 0.0), BesselDomainError);
  CHECK_THROWS_AS(bessel_j(1, -1.0), BesselDomainError);
  CHECK_THROWS_AS(bessel_j(9, 1.0), UnsupportedOrder);
}
