#pragma once

// Closed-form kernels in R^4: free resolvent boundary values, partial-wave
// (channel) kernels, the zero-energy kernels G_0..G_5 with their scalar
// companions g_j, the cutoff chi and the auxiliary functions A, F, G, G~.

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "lowdisp/specfun.hpp"

namespace lowdisp {

using cplx = std::complex<double>;

struct SpectralPoint {
  double lambda = 0;
  int sign = +1;  // +1 or -1, limiting absorption side
};

struct SingularDistance : std::domain_error {
  using std::domain_error::domain_error;
};

// Smooth even cutoff: 1 on [0, l1], 0 beyond 2 l1, quintic smoothstep between (C^2).
struct Cutoff {
  double lambda1 = 0.25;
  double operator()(double lambda) const {
    double s = (std::abs(lambda) - lambda1) / lambda1;
    if (s <= 0) return 1;
    if (s >= 1) return 0;
    return 1 - s * s * s * (10 - 15 * s + 6 * s * s);
  }
  double derivative(double lambda) const {
    double s = (std::abs(lambda) - lambda1) / lambda1;
    if (s <= 0 || s >= 1) return 0;
    return -30 * s * s * (1 - s) * (1 - s) / lambda1;
  }
};

// R_0^±(lambda^2)(d) = ±(i/4) (lambda/(2 pi d)) H_1^±(lambda d)
inline cplx free_kernel_4d(SpectralPoint pt, double d) {
  if (!(d > 0)) throw SingularDistance("free_kernel_4d: distance must be positive");
  double s = pt.sign > 0 ? 1.0 : -1.0;
  return s * cplx(0, 0.25) * (pt.lambda / (2 * M_PI * d)) * hankel<double>(pt.sign, 1, pt.lambda * d);
}

// 2D kernel ±(i/4) H_0^±(lambda d)
inline cplx free_kernel_2d(SpectralPoint pt, double d) {
  if (!(d > 0)) throw SingularDistance("free_kernel_2d: distance must be positive");
  double s = pt.sign > 0 ? 1.0 : -1.0;
  return s * cplx(0, 0.25) * hankel<double>(pt.sign, 0, pt.lambda * d);
}

// |(1/lambda) d/dlambda G4 - c G2|; c = 1/(2 pi) is the identity.  Five-point stencil with a
// wide step: G4 ~ 1/(4 pi^2 d^2) is a large constant at small lambda d, and a narrow
// difference loses it to rounding.
inline double dimension_reduction_check(SpectralPoint pt, double d, double c = 1 / (2 * M_PI)) {
  double h = pt.lambda * 2e-3;
  auto G = [&](double k) { return free_kernel_4d({pt.lambda + k * h, pt.sign}, d); };
  cplx deriv = (G(-2) - 8.0 * G(-1) + 8.0 * G(1) - G(2)) / (12 * h);
  return std::abs(deriv / pt.lambda - c * free_kernel_2d(pt, d));
}

// ---- channel kernels -----------------------------------------------------

// Flattened half-line kernel ±(i pi/2) sqrt(r r') J_nu(lambda r<) H_nu^±(lambda r>), nu = ell+1.
inline cplx channel_kernel(int ell, SpectralPoint pt, double r, double rp) {
  if (!(r > 0 && rp > 0)) throw SingularDistance("channel_kernel: radii must be positive");
  int nu = ell + 1;
  double lo = std::min(r, rp), hi = std::max(r, rp);
  double J1[kMaxBesselOrder + 2], Y1[kMaxBesselOrder + 2], J2[kMaxBesselOrder + 2], Y2[kMaxBesselOrder + 2];
  bessel_jy_all<double>(pt.lambda * lo, nu, J1, Y1);
  bessel_jy_all<double>(pt.lambda * hi, nu, J2, Y2);
  double pre = 0.5 * M_PI * std::sqrt(r * rp);
  double s = pt.sign > 0 ? 1.0 : -1.0;
  return {-pre * J1[nu] * Y2[nu], s * pre * J1[nu] * J2[nu]};
}

// lambda -> 0 limit: sqrt(r r') (r</r>)^nu / (2 nu)
inline double channel_kernel_zero(int ell, double r, double rp) {
  int nu = ell + 1;
  double lo = std::min(r, rp), hi = std::max(r, rp);
  return std::sqrt(r * rp) * std::pow(lo / hi, nu) / (2 * nu);
}

// Real and imaginary parts of k_ell^+(lambda) - k_ell(0), summed from the
// Bessel series so that nothing cancels as lambda -> 0. Valid for lambda r> < 2.
template <class Real>
std::array<Real, 2> channel_kernel_delta_series(int ell, Real lambda, Real r, Real rp) {
  using std::abs;
  using std::pow;
  using std::sqrt;
  const Real pi = detail::pi<Real>();
  int nu = ell + 1;
  Real lo = r < rp ? r : rp, hi = r < rp ? rp : r;
  Real a = lambda * lo, b = lambda * hi;
  Real ha = a / 2, hb = b / 2;
  // J_nu(a) = (a/2)^nu [1/nu! + Jrest]
  Real qa = -ha * ha, term = 1 / detail::factorial<Real>(nu), jrest = 0;
  for (int k = 1; k < 200; ++k) {
    term *= qa / (Real(k) * (nu + k));
    jrest += term;
    if (abs(term) <= detail::eps<Real>() * abs(jrest) / 4) break;
  }
  // singular part of Y_nu(b) = -(1/pi) (b/2)^{-nu} [(nu-1)! + Srest]
  Real srest = 0;
  for (int k = 1; k < nu; ++k)
    srest += detail::factorial<Real>(nu - k - 1) / detail::factorial<Real>(k) * pow(hb, 2 * k);
  Real ratio = pow(lo / hi, nu);
  // J(a)*sing(b) - leading
  Real prod_rest = -(ratio / pi) * (srest / detail::factorial<Real>(nu) + jrest * (detail::factorial<Real>(nu - 1) + srest));
  auto yp = bessel_y_series_parts<Real>(nu, b);
  Real ja = pow(ha, nu) * (1 / detail::factorial<Real>(nu) + jrest);
  Real pre = pi / 2 * sqrt(r * rp);
  Real re = -pre * (prod_rest + ja * (yp.log_part + yp.regular));
  Real im = pre * ja * bessel_j_series<Real>(nu, b);
  return {re, im};
}

// k_ell^±(lambda) - k_ell(0) in double; series when lambda r> is small, direct otherwise.
inline cplx channel_kernel_delta(int ell, SpectralPoint pt, double r, double rp) {
  double s = pt.sign > 0 ? 1.0 : -1.0;
  if (pt.lambda * std::max(r, rp) < kSeriesLimit) {
    auto v = channel_kernel_delta_series<double>(ell, pt.lambda, r, rp);
    return {v[0], s * v[1]};
  }
  return channel_kernel(ell, pt, r, rp) - channel_kernel_zero(ell, r, rp);
}

// Free spectral jump per channel: k^+ - k^- = i pi sqrt(r r') J_nu(lambda r) J_nu(lambda r').
inline double channel_regular(int ell, double lambda, double r) {
  return std::sqrt(r) * bessel<double>(BesselKind::J, ell + 1, lambda * r);
}

// Gegenbauer C^{(1)}_ell(cos theta) = U_ell(cos theta)
inline double chebyshev_u(int ell, double x) {
  double u0 = 1, u1 = 2 * x;
  if (ell == 0) return 1;
  for (int k = 2; k <= ell; ++k) {
    double u2 = 2 * x * u1 - u0;
    u0 = u1;
    u1 = u2;
  }
  return u1;
}

// Full-space kernel from flattened channel kernels:
// K(x,y) = sum_ell (ell+1)/(2 pi^2) U_ell(cos theta) k_ell(r,r') / (r r')^{3/2}
inline double channel_weight(int ell, double r, double rp, double cos_theta) {
  return (ell + 1) / (2 * M_PI * M_PI) * chebyshev_u(ell, cos_theta) / std::pow(r * rp, 1.5);
}

// ---- zero-energy kernels and scalar functions ------------------------------

namespace detail {

// J_1(z)/z = sum alpha_k z^{2k};  Y_1(z)/z = -2/(pi z^2) + (2/pi) log(z/2) J_1(z)/z + sum beta_k z^{2k}
template <class Real = double>
Real alpha_k(int k) {
  Real s = (k % 2) ? Real(-1) : Real(1);
  return s / (pow(Real(2), 2 * k + 1) * factorial<Real>(k) * factorial<Real>(k + 1));
}
template <class Real = double>
Real beta_k(int k) {
  return -(psi_int<Real>(k + 1) + psi_int<Real>(k + 2)) / pi<Real>() * alpha_k<Real>(k);
}

}  // namespace detail

// Constants of the low-energy expansion
//   R_0^± = G_0 + sum_{j>=1} [ g_j^±(lambda) d^{2j-2} + lambda^{2j} c_{2j-1} d^{2j-2} log d ],
//   g_j^± = lambda^{2j}(a_j log lambda + z_j^±).
// Normalisation: the kernel multiplying g_j is d^{2j-2} (c_j = 1 for even j >= 2).
// Read off from the J_1, Y_1 series; returns {a_j, Re z_j, Im z_j}.
template <class Real = double>
std::array<Real, 3> expansion_constant(int j) {
  using std::log;
  Real al = detail::alpha_k<Real>(j - 1), be = detail::beta_k<Real>(j - 1);
  Real pi = detail::pi<Real>();
  return {-al / (4 * pi * pi), (2 * al / pi * log(Real(2)) - be) / (8 * pi), al / (8 * pi)};
}

struct ExpansionConstants {
  double a[4] = {};   // a[1..3]
  cplx z[4] = {};     // z_j^+
  double c[6] = {};   // c[1..5]; c[2] = c[4] = 1
};

inline const ExpansionConstants& expansion_constants() {
  static const ExpansionConstants K = [] {
    ExpansionConstants e;
    for (int j = 1; j <= 3; ++j) {
      auto v = expansion_constant<double>(j);
      e.a[j] = v[0];
      e.z[j] = cplx(v[1], v[2]);
      e.c[2 * j - 1] = e.a[j];
    }
    e.c[2] = e.c[4] = 1;
    return e;
  }();
  return K;
}

inline cplx g_coeff(int j, SpectralPoint pt) {
  if (j < 1 || j > 3) throw std::out_of_range("g_coeff: j must be 1..3");
  const auto& K = expansion_constants();
  cplx z = pt.sign > 0 ? K.z[j] : std::conj(K.z[j]);
  return std::pow(pt.lambda, 2 * j) * (K.a[j] * std::log(pt.lambda) + z);
}

inline double gj_kernel(int j, double d) {
  if (j < 0 || j > 5) throw std::out_of_range("gj_kernel: j must be 0..5");
  if (j == 0) {
    if (!(d > 0)) throw SingularDistance("gj_kernel: G_0 is singular at d = 0");
    return 1 / (4 * M_PI * M_PI * d * d);
  }
  const auto& K = expansion_constants();
  if (j % 2 == 0) return K.c[j] * std::pow(d, j);
  if (d == 0) return 0;
  return K.c[j] * std::pow(d, j - 1) * std::log(d);
}

// Expansion of R_0^± truncated after `terms` groups (0: G_0 only; m: through g_m, lambda^{2m} G_{2m-1}).
inline cplx free_kernel_expansion(SpectralPoint pt, double d, int terms) {
  cplx s = gj_kernel(0, d);
  const auto& K = expansion_constants();
  for (int j = 1; j <= terms; ++j) {
    double pw = std::pow(d, 2 * j - 2);
    s += g_coeff(j, pt) * pw;
    s += std::pow(pt.lambda, 2 * j) * K.c[2 * j - 1] * pw * (d > 0 ? std::log(d) : 0.0);
  }
  return s;
}

// U_ell coefficients (in cos theta) of the zero-energy kernels on the sphere of radii r, r'.
namespace detail {

// coefficients f_0..f_{n-1} of log|x-y|
template <class Real>
std::vector<Real> log_coeffs(Real r, Real rp, int n) {
  using std::log;
  using std::pow;
  Real lo = r < rp ? r : rp, hi = r < rp ? rp : r, t = lo / hi;
  std::vector<Real> f(n, Real(0));
  f[0] = log(hi) + t * t / 4;
  for (int l = 1; l < n; ++l) f[l] = -pow(t, l) / (2 * l) + pow(t, l + 2) / (2 * (l + 2));
  return f;
}

// multiply a U-series by d^2 = r^2 + r'^2 - 2 r r' x
template <class Real>
std::vector<Real> times_d2(const std::vector<Real>& f, Real r, Real rp) {
  int n = static_cast<int>(f.size());
  std::vector<Real> g(n, Real(0));
  for (int l = 0; l < n; ++l) {
    Real xf = ((l > 0 ? f[l - 1] : Real(0)) + (l + 1 < n ? f[l + 1] : Real(0))) / 2;
    g[l] = (r * r + rp * rp) * f[l] - 2 * r * rp * xf;
  }
  return g;
}

}  // namespace detail

// Channel-ell flattened kernel of a zero-energy operator:
//   (4 pi/(ell+1)) (r r')^{3/2} int_0^pi K(x,y) U_ell(cos th) sin^2 th dth.
// j = 0..5 is G_j; j = -1 is the constant kernel 1 (the g_1 / P term).
template <class Real>
Real gj_channel_t(int j, int ell, Real r, Real rp) {
  using std::pow;
  using std::sqrt;
  const Real pi = detail::pi<Real>();
  Real pre = 2 * pi * pi / (ell + 1) * pow(r * rp, 1) * sqrt(r * rp);
  if (j == 0) {
    Real lo = r < rp ? r : rp, hi = r < rp ? rp : r;
    return sqrt(r * rp) * pow(lo / hi, ell + 1) / (2 * (ell + 1));
  }
  if (j == -1) return ell == 0 ? pre : Real(0);
  int k = (j % 2 == 0) ? j / 2 : (j - 1) / 2;  // power of d^2
  int n = ell + k + 3;
  std::vector<Real> f;
  if (j % 2 == 0) {
    f.assign(n, Real(0));
    f[0] = 1;
  } else {
    f = detail::log_coeffs<Real>(r, rp, n);
  }
  for (int i = 0; i < k; ++i) f = detail::times_d2<Real>(f, r, rp);
  Real c = (j % 2 == 0) ? Real(1) : expansion_constant<Real>((j + 1) / 2)[0];
  return pre * c * f[ell];
}

inline double gj_channel(int j, int ell, double r, double rp) { return gj_channel_t<double>(j, ell, r, rp); }

// Channel kernel of k^±(lambda) - k(0) minus the first m groups of the
// low-energy expansion (g_1 P + lambda^2 G_1, then g_2 G_2 + lambda^4 G_3, ...),
// evaluated in Real so the residual survives the cancellation.
template <class Real>
std::complex<double> channel_expansion_residual(int m, int ell, SpectralPoint pt, double r, double rp) {
  using std::log;
  Real lam = pt.lambda, R = r, Rp = rp;
  auto d = channel_kernel_delta_series<Real>(ell, lam, R, Rp);
  Real re = d[0], im = d[1];
  Real loglam = log(lam), l2 = lam * lam, pw = 1;
  for (int j = 1; j <= m; ++j) {
    pw *= l2;
    auto c = expansion_constant<Real>(j);
    Real even = gj_channel_t<Real>(j == 1 ? -1 : 2 * j - 2, ell, R, Rp);
    Real odd = gj_channel_t<Real>(2 * j - 1, ell, R, Rp);
    re -= pw * ((c[0] * loglam + c[1]) * even + odd);
    im -= pw * c[2] * even;
  }
  double s = pt.sign > 0 ? 1.0 : -1.0;
  return {static_cast<double>(re), s * static_cast<double>(im)};
}

// ---- auxiliary functions -------------------------------------------------

enum class AuxKind { A, F, G, GtildePlus, GtildeMinus };

struct AuxArgs {
  double p = 1;
  double q = 1;
};

// A(z) = (i/4pi) J_1(z)/z so that [R_0^+ - R_0^-](lambda^2)(d) = lambda^2 A(lambda d).
inline cplx aux_A(double z) {
  double v = z < 1e-8 ? 0.5 - z * z / 16 : bessel<double>(BesselKind::J, 1, z) / z;
  return cplx(0, 1 / (4 * M_PI)) * v;
}

// chi(z)[Y_1(z)/z + 2/(pi z^2)], the regularised Y_1 part
inline double aux_b(double z, const Cutoff& chi) {
  double c = chi(z);
  if (c == 0) return 0;
  double v;
  if (z < kSeriesLimit) {
    auto p = bessel_y_series_parts<double>(1, z);
    v = (p.log_part + p.regular) / z;  // singular part is exactly -2/(pi z)
  } else {
    v = bessel<double>(BesselKind::Y, 1, z) / z + 2 / (M_PI * z * z);
  }
  return c * v;
}

// w~±(z) = (i/8pi) omega±(z)/z
inline cplx aux_wtilde(int sign, double z) {
  return cplx(0, 1 / (8 * M_PI)) * omega_amplitude(sign, z) / z;
}

inline cplx aux_function(AuxKind kind, SpectralPoint pt, AuxArgs args, Cutoff chi = {}) {
  if (!(args.p > 0 && args.q > 0)) throw SingularDistance("aux_function: p, q must be positive");
  double lp = pt.lambda * args.p, lq = pt.lambda * args.q;
  switch (kind) {
    case AuxKind::A:
      return aux_A(lp);
    case AuxKind::G:
      return aux_A(lp) * chi(lp) - aux_A(lq) * chi(lq);
    case AuxKind::F:
      return aux_b(lp, chi) - aux_b(lq, chi);
    case AuxKind::GtildePlus:
    case AuxKind::GtildeMinus: {
      int s = kind == AuxKind::GtildePlus ? 1 : -1;
      double cp = 1 - chi(lp), cq = 1 - chi(lq);
      cplx a = cp == 0 ? cplx(0) : cp * aux_wtilde(s, lp);
      cplx b = cq == 0 ? cplx(0) : cq * aux_wtilde(s, lq);
      return a - std::polar(1.0, s * pt.lambda * (args.q - args.p)) * b;
    }
  }
  return 0;
}

}  // namespace lowdisp
