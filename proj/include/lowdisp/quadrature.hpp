#pragma once

// Gauss–Legendre and Gauss–Lobatto rules, Legendre transforms on panels,
// and the Filon panel rule: int e^{i w s} p(s) ds with p the Legendre
// interpolant of the amplitude, moments from spherical Bessel functions.

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <vector>

namespace lowdisp {

struct GaussRule {
  std::vector<double> x;  // nodes on [-1, 1], increasing
  std::vector<double> w;
};

namespace detail {

// P_n and P_n' at x
inline void legendre_pd(int n, double x, double& p, double& dp) {
  double p0 = 1, p1 = x;
  if (n == 0) { p = 1; dp = 0; return; }
  for (int k = 2; k <= n; ++k) {
    double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  p = p1;
  dp = n * (x * p1 - p0) / (x * x - 1);
}

inline GaussRule make_gauss_legendre(int n) {
  GaussRule g;
  g.x.resize(n);
  g.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double p, dp;
    for (int it = 0; it < 100; ++it) {
      legendre_pd(n, x, p, dp);
      double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    legendre_pd(n, x, p, dp);
    double w = 2 / ((1 - x * x) * dp * dp);
    g.x[i] = -x;
    g.x[n - 1 - i] = x;
    g.w[i] = g.w[n - 1 - i] = w;
  }
  if (n % 2) g.x[n / 2] = 0;
  return g;
}

// Lobatto nodes: endpoints plus roots of P_{n-1}'.
inline GaussRule make_gauss_lobatto(int n) {
  GaussRule g;
  g.x.assign(n, 0);
  g.w.assign(n, 0);
  int m = n - 1;
  g.x[0] = -1;
  g.x[m] = 1;
  for (int i = 1; i < m; ++i) {
    double x = -std::cos(M_PI * i / m);
    for (int it = 0; it < 100; ++it) {
      // f = P_m'(x); f' from the Legendre ODE
      double p, dp;
      legendre_pd(m, x, p, dp);
      double d2p = (2 * x * dp - m * (m + 1) * p) / (1 - x * x);
      double dx = dp / d2p;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    g.x[i] = x;
  }
  for (int i = 0; i <= m; ++i) {
    double p, dp;
    legendre_pd(m, g.x[i], p, dp);
    if (i == 0 || i == m) p = (i == 0 && m % 2) ? -1.0 : 1.0;
    g.w[i] = 2.0 / (m * (m + 1) * p * p);
  }
  return g;
}

}  // namespace detail

inline const GaussRule& gauss_legendre(int n) {
  static std::map<int, GaussRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::make_gauss_legendre(n)).first;
  return it->second;
}

inline const GaussRule& gauss_lobatto(int n) {
  static std::map<int, GaussRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::make_gauss_lobatto(n)).first;
  return it->second;
}

// Legendre values P_0..P_{n-1} at x.
inline void legendre_all(int n, double x, double* P) {
  P[0] = 1;
  if (n > 1) P[1] = x;
  for (int k = 2; k < n; ++k) P[k] = ((2 * k - 1) * x * P[k - 1] - (k - 1) * P[k - 2]) / k;
}

// Legendre coefficients of the degree n-1 interpolant through values at the Gauss nodes.
template <class T>
std::vector<T> legendre_coefficients(const GaussRule& g, const T* values) {
  int n = static_cast<int>(g.x.size());
  std::vector<T> a(n, T(0));
  std::vector<double> P(n);
  for (int i = 0; i < n; ++i) {
    legendre_all(n, g.x[i], P.data());
    for (int k = 0; k < n; ++k) a[k] += (0.5 * (2 * k + 1) * g.w[i] * P[k]) * values[i];
  }
  return a;
}

template <class T>
T legendre_eval(const std::vector<T>& a, double x) {
  int n = static_cast<int>(a.size());
  // Clenshaw
  T b1 = T(0), b2 = T(0);
  for (int k = n - 1; k >= 1; --k) {
    double alpha = (2.0 * k + 1) / (k + 1) * x;
    double beta = -(k + 1.0) / (k + 2);
    T b0 = a[k] + alpha * b1 + beta * b2;
    b2 = b1;
    b1 = b0;
  }
  return a[0] + x * b1 - 0.5 * b2;
}

// Lagrange basis values at x for nodes xs (barycentric form).
inline void lagrange_basis(const std::vector<double>& xs, double x, double* L) {
  int n = static_cast<int>(xs.size());
  for (int j = 0; j < n; ++j)
    if (x == xs[j]) {
      for (int k = 0; k < n; ++k) L[k] = k == j ? 1.0 : 0.0;
      return;
    }
  double s = 0;
  for (int j = 0; j < n; ++j) {
    double wj = 1;
    for (int k = 0; k < n; ++k)
      if (k != j) wj /= (xs[j] - xs[k]);
    L[j] = wj / (x - xs[j]);
    s += L[j];
  }
  for (int j = 0; j < n; ++j) L[j] /= s;
}

// Spherical Bessel j_0..j_{n-1} at real z >= 0.
inline void sph_bessel_all(int n, double z, double* j) {
  if (z < 1e-3) {
    // series: j_k(z) = z^k/(2k+1)!! (1 - z^2/(2(2k+3)) + z^4/(8(2k+3)(2k+5)))
    double zk = 1, df = 1;
    for (int k = 0; k < n; ++k) {
      if (k > 0) {
        zk *= z;
        df *= (2 * k + 1);
      }
      double z2 = z * z;
      j[k] = zk / df * (1 - z2 / (2 * (2 * k + 3)) + z2 * z2 / (8.0 * (2 * k + 3) * (2 * k + 5)));
    }
    return;
  }
  double s = std::sin(z), c = std::cos(z);
  j[0] = s / z;
  if (n == 1) return;
  if (z > n) {
    j[1] = s / (z * z) - c / z;
    for (int k = 1; k + 1 < n; ++k) j[k + 1] = (2 * k + 1) / z * j[k] - j[k - 1];
    return;
  }
  // Miller backward recurrence normalised by j_0
  int start = n + 20 + static_cast<int>(std::sqrt(40.0 * (z + 1)));
  std::vector<double> t(start + 2, 0.0);
  t[start] = 1e-30;
  for (int k = start; k >= 1; --k) {
    t[k - 1] = (2 * k + 1) / z * t[k] - t[k + 1];
    if (std::abs(t[k - 1]) > 1e250)
      for (int m = k - 1; m <= start; ++m) t[m] *= 1e-250;
  }
  // normalise with whichever of j0, j1 is larger to avoid a zero of j0
  double j1 = s / (z * z) - c / z;
  double scale = std::abs(j[0]) > std::abs(j1) ? j[0] / t[0] : j1 / t[1];
  for (int k = 0; k < n; ++k) j[k] = t[k] * scale;
}

// m_k = int_{-1}^{1} e^{i w x} P_k(x) dx = 2 i^k j_k(w), k < n.
inline void filon_moments(int n, double w, std::complex<double>* m) {
  std::vector<double> j(n);
  sph_bessel_all(n, std::abs(w), j.data());
  std::complex<double> ik(1, 0);
  const std::complex<double> I(0, 1);
  for (int k = 0; k < n; ++k) {
    double jk = (w < 0 && (k % 2)) ? -j[k] : j[k];
    m[k] = 2.0 * ik * jk;
    ik *= I;
  }
}

// int_a^b e^{i w s} p(s) ds where p has Legendre coefficients `a` on [a,b].
inline std::complex<double> filon_panel(const std::vector<std::complex<double>>& coef, double a, double b,
                                        double w) {
  int n = static_cast<int>(coef.size());
  double c = 0.5 * (a + b), h = 0.5 * (b - a);
  std::vector<std::complex<double>> m(n);
  filon_moments(n, w * h, m.data());
  std::complex<double> s = 0;
  for (int k = 0; k < n; ++k) s += coef[k] * m[k];
  return h * std::polar(1.0, w * c) * s;
}

}  // namespace lowdisp
