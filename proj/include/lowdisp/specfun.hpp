#pragma once

// Bessel J, Y and Hankel H± of integer order 0..8 on z > 0.
// Regimes: power series (z < 2), Miller backward recurrence with Neumann
// sums for Y0/Y1 (2 <= z < 20), Hankel asymptotic expansion (z >= 20).
// Everything is templated on the real type so the series paths can be
// run in extended precision by the tests.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/constants/constants.hpp>

namespace lowdisp {

enum class BesselKind { J, Y };
enum class Regime { series, backward_recurrence, asymptotic };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::series: return "series";
    case Regime::backward_recurrence: return "backward-recurrence";
    case Regime::asymptotic: return "asymptotic";
  }
  return "?";
}

struct BesselDomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct UnsupportedOrder : std::out_of_range {
  using std::out_of_range::out_of_range;
};

constexpr int kMaxBesselOrder = 8;
constexpr double kSeriesLimit = 2.0;
constexpr double kAsymptoticLimit = 20.0;

template <class Real>
struct BesselEval {
  int order = 0;
  Real argument = 0;
  Real value = 0;
  Regime regime = Regime::series;
};

namespace detail {

template <class Real> Real pi() { return boost::math::constants::pi<Real>(); }
template <class Real> Real euler() { return boost::math::constants::euler<Real>(); }

template <class Real> Real eps() { return std::numeric_limits<Real>::epsilon(); }

template <class Real>
Real factorial(int n) {
  Real f = 1;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

// digamma at positive integers: psi(n) = -gamma + H_{n-1}
template <class Real>
Real psi_int(int n) {
  Real h = 0;
  for (int k = 1; k < n; ++k) h += Real(1) / k;
  return h - euler<Real>();
}

inline void check_args(int order, double z) {
  if (!(z > 0)) throw BesselDomainError("bessel: argument must be positive, got " + std::to_string(z));
  if (order < 0 || order > kMaxBesselOrder)
    throw UnsupportedOrder("bessel: order " + std::to_string(order) + " outside 0..8");
}

}  // namespace detail

// Power series of J_nu.
template <class Real>
Real bessel_j_series(int nu, Real z) {
  using std::abs;
  using std::pow;
  Real h = z / 2, q = -h * h;
  Real term = 1 / detail::factorial<Real>(nu);
  Real sum = term;
  for (int k = 1; k < 200; ++k) {
    term *= q / (Real(k) * (nu + k));
    sum += term;
    if (abs(term) <= detail::eps<Real>() * abs(sum) / 4) break;
  }
  return sum * pow(h, nu);
}

// The three pieces of the Y_nu series
//   Y_nu = -(1/pi) sum_{k<nu} (nu-k-1)!/k! (z/2)^{2k-nu}
//          + (2/pi) log(z/2) J_nu
//          - (1/pi) (z/2)^nu sum_k (psi(k+1)+psi(nu+k+1)) (-z^2/4)^k / (k!(nu+k)!)
template <class Real>
struct YSeriesParts {
  Real singular = 0;  // finite negative-power sum
  Real log_part = 0;  // (2/pi) log(z/2) J_nu
  Real regular = 0;   // psi sum
};

template <class Real>
YSeriesParts<Real> bessel_y_series_parts(int nu, Real z) {
  using std::abs;
  using std::log;
  using std::pow;
  const Real pi = detail::pi<Real>();
  Real h = z / 2, q = -h * h;
  YSeriesParts<Real> out;
  for (int k = 0; k < nu; ++k)
    out.singular -= detail::factorial<Real>(nu - k - 1) / detail::factorial<Real>(k) * pow(h, 2 * k - nu) / pi;
  out.log_part = 2 / pi * log(h) * bessel_j_series<Real>(nu, z);
  Real coef = 1 / detail::factorial<Real>(nu);
  Real sum = (detail::psi_int<Real>(1) + detail::psi_int<Real>(nu + 1)) * coef;
  for (int k = 1; k < 200; ++k) {
    coef *= q / (Real(k) * (nu + k));
    Real t = (detail::psi_int<Real>(k + 1) + detail::psi_int<Real>(nu + k + 1)) * coef;
    sum += t;
    if (abs(t) <= detail::eps<Real>() * abs(sum) / 4) break;
  }
  out.regular = -pow(h, nu) * sum / pi;
  return out;
}

template <class Real>
Real bessel_y_series(int nu, Real z) {
  auto p = bessel_y_series_parts<Real>(nu, z);
  return p.singular + p.log_part + p.regular;
}

// Coefficients b1, b2 of Y1(z) = -2/(pi z) + (2/pi) log(z/2) J1(z) + b1 z + b2 z^3 + O(z^5).
template <class Real = double>
Real y1_series_b1() {
  return -(detail::psi_int<Real>(1) + detail::psi_int<Real>(2)) / (2 * detail::pi<Real>());
}
template <class Real = double>
Real y1_series_b2() {
  return (detail::psi_int<Real>(2) + detail::psi_int<Real>(3)) / (16 * detail::pi<Real>());
}

// Miller backward recurrence: fills J_0..J_{nmax} (nmax small) and also
// returns the even-order tail needed by the Neumann sums for Y0, Y1.
template <class Real>
std::vector<Real> bessel_j_miller(Real z, int& start) {
  using std::abs;
  using std::sqrt;
  double zd = static_cast<double>(z);
  double zz = zd > 10 ? zd : 10;
  start = 2 * static_cast<int>((zz + 20 + std::sqrt(40 * zz)) / 2);
  std::vector<Real> j(start + 2, Real(0));
  j[start + 1] = 0;
  j[start] = Real(1e-30);
  for (int k = start; k >= 1; --k) {
    j[k - 1] = Real(2 * k) / z * j[k] - j[k + 1];
    if (abs(j[k - 1]) > Real(1e250)) {
      for (int m = k - 1; m <= start; ++m) j[m] *= Real(1e-250);
    }
  }
  Real norm = j[0];
  for (int k = 2; k <= start; k += 2) norm += 2 * j[k];
  for (auto& v : j) v /= norm;
  return j;
}

namespace detail {

template <class Real>
void hankel_pq(int nu, Real z, Real& P, Real& Q) {
  using std::abs;
  Real mu = Real(4 * nu * nu);
  Real term = 1;
  P = 1;
  Q = 0;
  Real last = 1e300;
  for (int k = 1; k < 60; ++k) {
    term *= (mu - Real((2 * k - 1) * (2 * k - 1))) / (Real(k) * 8 * z);
    Real a = abs(term);
    if (a > last) break;  // asymptotic series starts to diverge
    last = a;
    int r = k % 4;
    if (r == 1) Q += term;
    else if (r == 2) P -= term;
    else if (r == 3) Q -= term;
    else P += term;
    if (a < eps<Real>() / 8) break;
  }
}

// J0, J1, Y0, Y1 by the Hankel asymptotic expansion.
template <class Real>
void asymptotic01(Real z, Real j[2], Real y[2]) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Real pi = detail::pi<Real>();
  Real amp = sqrt(2 / (pi * z));
  Real cz = cos(z), sz = sin(z);
  for (int nu = 0; nu < 2; ++nu) {
    Real P, Q;
    hankel_pq<Real>(nu, z, P, Q);
    // chi = z - theta, theta = (nu/2 + 1/4) pi
    Real th = (Real(nu) / 2 + Real(1) / 4) * pi;
    Real ct = cos(th), st = sin(th);
    Real cchi = cz * ct + sz * st;
    Real schi = sz * ct - cz * st;
    j[nu] = amp * (P * cchi - Q * schi);
    y[nu] = amp * (P * schi + Q * cchi);
  }
}

template <class Real>
void neumann01(Real z, const std::vector<Real>& J, int start, Real y[2]) {
  using std::log;
  const Real pi = detail::pi<Real>();
  Real L = log(z / 2) + euler<Real>();
  Real s0 = 0, s1 = 0;
  for (int k = 1; 2 * k + 1 <= start; ++k) {
    Real sg = (k % 2) ? Real(-1) : Real(1);
    s0 += sg * J[2 * k] / Real(k);
    s1 += sg * (J[2 * k - 1] - J[2 * k + 1]) / Real(k);
  }
  y[0] = 2 / pi * L * J[0] - 4 / pi * s0;
  y[1] = -2 / pi * J[0] / z + 2 / pi * L * J[1] + 2 / pi * s1;
}

}  // namespace detail

inline Regime regime_for(double z) {
  if (z < kSeriesLimit) return Regime::series;
  if (z < kAsymptoticLimit) return Regime::backward_recurrence;
  return Regime::asymptotic;
}

// All orders 0..nmax (nmax <= 9) of J and Y in one pass, in a forced regime.
template <class Real>
void bessel_jy_all(Real z, int nmax, Regime regime, Real* J, Real* Y) {
  if (regime == Regime::series) {
    for (int n = 0; n <= nmax; ++n) {
      J[n] = bessel_j_series<Real>(n, z);
      Y[n] = bessel_y_series<Real>(n, z);
    }
    return;
  }
  Real y01[2];
  if (regime == Regime::backward_recurrence) {
    int start = 0;
    auto jm = bessel_j_miller<Real>(z, start);
    for (int n = 0; n <= nmax; ++n) J[n] = jm[n];
    detail::neumann01<Real>(z, jm, start, y01);
  } else {
    Real j01[2];
    detail::asymptotic01<Real>(z, j01, y01);
    J[0] = j01[0];
    if (nmax >= 1) J[1] = j01[1];
    for (int n = 1; n < nmax; ++n) J[n + 1] = Real(2 * n) / z * J[n] - J[n - 1];
  }
  Y[0] = y01[0];
  if (nmax >= 1) Y[1] = y01[1];
  for (int n = 1; n < nmax; ++n) Y[n + 1] = Real(2 * n) / z * Y[n] - Y[n - 1];
}

template <class Real>
void bessel_jy_all(Real z, int nmax, Real* J, Real* Y) {
  bessel_jy_all<Real>(z, nmax, regime_for(static_cast<double>(z)), J, Y);
}

template <class Real = double>
BesselEval<Real> bessel_eval(BesselKind kind, int order, Real z) {
  detail::check_args(order, static_cast<double>(z));
  Real J[kMaxBesselOrder + 2], Y[kMaxBesselOrder + 2];
  Regime r = regime_for(static_cast<double>(z));
  if (r == Regime::series) {
    Real v = kind == BesselKind::J ? bessel_j_series<Real>(order, z) : bessel_y_series<Real>(order, z);
    return {order, z, v, r};
  }
  bessel_jy_all<Real>(z, order, r, J, Y);
  return {order, z, kind == BesselKind::J ? J[order] : Y[order], r};
}

template <class Real = double>
Real bessel(BesselKind kind, int order, Real z) {
  return bessel_eval<Real>(kind, order, z).value;
}

inline double bessel_j(int n, double z) { return bessel(BesselKind::J, n, z); }
inline double bessel_y(int n, double z) { return bessel(BesselKind::Y, n, z); }

// C_nu' = C_{nu-1} - (nu/z) C_nu,  C_0' = -C_1
template <class Real = double>
Real bessel_derivative(BesselKind kind, int order, Real z) {
  if (order == 0) return -bessel<Real>(kind, 1, z);
  return bessel<Real>(kind, order - 1, z) - Real(order) / z * bessel<Real>(kind, order, z);
}

template <class Real = double>
std::complex<Real> hankel(int sign, int order, Real z) {
  Real j = bessel<Real>(BesselKind::J, order, z);
  Real y = bessel<Real>(BesselKind::Y, order, z);
  return {j, sign > 0 ? y : -y};
}

// omega±(z) = H_1±(z) e^{∓iz}: the slowly varying amplitude of H_1±.
inline std::complex<double> omega_amplitude(int sign, double z) {
  detail::check_args(1, z);
  const double s = sign > 0 ? 1.0 : -1.0;
  if (z >= kAsymptoticLimit) {
    double P, Q;
    detail::hankel_pq<double>(1, z, P, Q);
    double amp = std::sqrt(2 / (M_PI * z));
    // H1± = amp (P ± iQ) e^{±i(z - 3pi/4)}
    return amp * std::complex<double>(P, s * Q) * std::polar(1.0, -s * 0.75 * M_PI);
  }
  return hankel<double>(sign > 0 ? 1 : -1, 1, z) * std::polar(1.0, -s * z);
}

}  // namespace lowdisp
