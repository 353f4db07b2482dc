#pragma once
// Low-energy propagator kernels from Stone's formula, Born terms, and a
// box-diagonalisation oracle.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "discretize.hpp"
#include "kernels.hpp"
#include "potentials.hpp"
#include "quadrature.hpp"
#include "spectral.hpp"

extern "C" void dstevr_(const char* jobz, const char* range, const int* n, double* d, double* e, const double* vl,
                        const double* vu, const int* il, const int* iu, const double* abstol, int* m, double* w,
                        double* z, const int* ldz, int* isuppz, double* work, const int* lwork, int* iwork,
                        const int* liwork, int* info);

namespace lowdisp {

// ---- multipliers -----------------------------------------------------------

enum class MultiplierKind { Schrod, KGcos, KGsin, WaveCos, WaveSin };

struct Multiplier {
  MultiplierKind kind = MultiplierKind::Schrod;
  double mass = 0;

  static Multiplier make(MultiplierKind k, double m = 0) {
    Multiplier mu{k, m};
    if (k == MultiplierKind::KGcos || k == MultiplierKind::KGsin) {
      if (!(m > 0)) throw ConfigError("Klein-Gordon multipliers need mass > 0");
    } else {
      mu.mass = 0;
    }
    return mu;
  }
  static Multiplier parse(const std::string& s, double m = 0) {
    if (s == "schrod") return make(MultiplierKind::Schrod);
    if (s == "kgcos") return make(MultiplierKind::KGcos, m);
    if (s == "kgsin") return make(MultiplierKind::KGsin, m);
    if (s == "wavecos") return make(MultiplierKind::WaveCos);
    if (s == "wavesin") return make(MultiplierKind::WaveSin);
    throw ConfigError("unknown multiplier '" + s + "'");
  }
  std::string name() const {
    switch (kind) {
      case MultiplierKind::Schrod: return "schrod";
      case MultiplierKind::KGcos: return "kgcos";
      case MultiplierKind::KGsin: return "kgsin";
      case MultiplierKind::WaveCos: return "wavecos";
      case MultiplierKind::WaveSin: return "wavesin";
    }
    return "?";
  }
  bool schrodinger() const { return kind == MultiplierKind::Schrod; }
  bool sine() const { return kind == MultiplierKind::KGsin || kind == MultiplierKind::WaveSin; }

  // mult(t, E) with E = lambda^2 >= 0
  cplx operator()(double t, double E) const {
    if (schrodinger()) return std::polar(1.0, t * E);
    double w = std::sqrt(E + mass * mass);
    if (!sine()) return std::cos(t * w);
    if (w == 0) return t;
    return std::sin(t * w) / w;
  }
};

// ---- sample pairs ------------------------------------------------------------

struct RadialPair {
  double r = 1, rp = 1;
  double cos_theta = 1;  // relative angle of x and y
};

// e^{i t (-Delta)} kernel in R^4 without cutoff: e^{i|x-y|^2/(4t)} / (4 pi i t)^2 up to the sign of the phase.
inline cplx free_schrodinger_kernel(double t, const RadialPair& p) {
  double d2 = p.r * p.r + p.rp * p.rp - 2 * p.r * p.rp * p.cos_theta;
  cplx denom = cplx(0, 4 * M_PI * t);
  return std::polar(1.0, -d2 / (4 * t)) / (denom * denom);
}

// ---- spectral density --------------------------------------------------------

// Per-channel distorted waves phi = j - R_0^+ v M^{-1} v j (j = sqrt(r) J_nu(lambda r)),
// so that [R_V^+ - R_V^-]_ell(r, r') = i pi phi(r) conj(phi(r')). A null model is V = 0.
class DensityEngine {
 public:
  DensityEngine(const SpectralModel* model, std::vector<RadialPair> pairs, int max_ell)
      : model_(model), pairs_(std::move(pairs)), L_(max_ell) {
    if (model_ && max_ell > model_->max_ell()) throw ConfigError("channels exceed the spectral model's max_ell");
    if (L_ < 0) throw ConfigError("max_ell must be >= 0");
    for (const auto& p : pairs_) {
      if (!(p.r > 0 && p.rp > 0)) throw ConfigError("pair radii must be positive");
      idx_.push_back({radius_index_(p.r), radius_index_(p.rp)});
    }
    weights_.resize(pairs_.size(), std::vector<double>(L_ + 1));
    for (size_t k = 0; k < pairs_.size(); ++k)
      for (int l = 0; l <= L_; ++l)
        weights_[k][l] = channel_weight(l, pairs_[k].r, pairs_[k].rp, pairs_[k].cos_theta);
  }

  const std::vector<RadialPair>& pairs() const { return pairs_; }
  int max_ell() const { return L_; }
  const SpectralModel* model() const { return model_; }

  // phi_ell at the distinct radii
  Eigen::VectorXcd phi(double lambda, int ell) const {
    Eigen::VectorXcd j = free_waves_(lambda, ell);
    if (!model_) return j;
    auto g = born_waves_(lambda, ell, 0, true);
    return j - g.back();
  }

  // [R_V^+ - R_V^-](lambda^2)(x, y) per pair (purely imaginary up to roundoff).
  std::vector<cplx> jump(double lambda) const {
    std::vector<cplx> out(pairs_.size(), 0.0);
    for (int l = 0; l <= L_; ++l) {
      Eigen::VectorXcd f = phi(lambda, l);
      for (size_t k = 0; k < pairs_.size(); ++k)
        out[k] += weights_[k][l] * cplx(0, M_PI) * f(idx_[k][0]) * std::conj(f(idx_[k][1]));
    }
    return out;
  }

  // (1/2 pi i) [R_V^+ - R_V^-] per pair: the density against du, u = lambda^2.
  std::vector<double> density(double lambda) const {
    auto J = jump(lambda);
    std::vector<double> d(J.size());
    for (size_t k = 0; k < J.size(); ++k) d[k] = (J[k] / cplx(0, 2 * M_PI)).real();
    return d;
  }

  // Density of the k-th Born term R_0 (V R_0)^k.  The jump of a product of
  // k+1 free resolvents telescopes into k+1 rank-one pieces i pi conj(g_i) g_{k-i},
  // g_m = (R_0^+ V)^m j, which keeps relative accuracy as lambda -> 0.
  std::vector<double> born_density(double lambda, int k) const {
    if (k < 0 || k > 3) throw ConfigError("born_term: k must be in 0..3");
    if (k > 0 && !model_) throw ConfigError("born_term: k > 0 needs a potential");
    std::vector<double> d(pairs_.size(), 0.0);
    for (int l = 0; l <= L_; ++l) {
      std::vector<Eigen::VectorXcd> g{free_waves_(lambda, l)};
      if (k > 0) {
        auto more = born_waves_(lambda, l, k, false);
        g.insert(g.end(), more.begin(), more.end());
      }
      for (size_t q = 0; q < pairs_.size(); ++q) {
        cplx s = 0;
        for (int i = 0; i <= k; ++i) s += std::conj(g[i](idx_[q][0])) * g[k - i](idx_[q][1]);
        d[q] += weights_[q][l] * 0.5 * s.real();
      }
    }
    return d;
  }

  // R_V^+(lambda^2) per channel at the pair radii, two ways:
  //   direct:  R_0 - R_0 v M^{-1} v R_0
  //   split:   R_0 - R_0 V R_0 + R_0 V R_0 V R_0 - R_0 V R_0 v M^{-1} v R_0 V R_0
  std::array<std::vector<cplx>, 2> resolvent_two_ways(double lambda, int ell) const {
    if (!model_) throw ConfigError("resolvent_two_ways needs a potential");
    const RadialGrid& g = model_->grid();
    SpectralPoint pt{lambda, +1};
    Eigen::MatrixXcd Ar = rows_(pt, ell);  // scaled v R_0(r_i, .)
    auto inv = model_->inverse(pt, ell);
    Eigen::MatrixXcd A = born_matrix_(pt, ell);
    Eigen::VectorXd U(g.N);
    for (int i = 0; i < g.N; ++i) U(i) = model_->U(g.nodes[i]);
    std::array<std::vector<cplx>, 2> out;
    for (size_t q = 0; q < pairs_.size(); ++q) {
      const auto& p = pairs_[q];
      cplx k0 = channel_kernel(ell, pt, p.r, p.rp);
      Eigen::VectorXcd a = Ar.row(idx_[q][0]).transpose(), b = Ar.row(idx_[q][1]).transpose();
      cplx direct = k0 - (a.transpose() * inv.apply(b))(0);
      Eigen::VectorXcd Ua = U.asDiagonal() * a, Ub = U.asDiagonal() * b;
      Eigen::VectorXcd AUb = A * Ub;
      Eigen::VectorXcd AUa = A * Ua;
      cplx split = k0 - (a.transpose() * Ub)(0) + (Ua.transpose() * AUb)(0) - (AUa.transpose() * inv.apply(AUb))(0);
      out[0].push_back(direct);
      out[1].push_back(split);
    }
    return out;
  }

 private:
  int radius_index_(double r) {
    for (size_t i = 0; i < radii_.size(); ++i)
      if (radii_[i] == r) return static_cast<int>(i);
    radii_.push_back(r);
    return static_cast<int>(radii_.size()) - 1;
  }

  Eigen::VectorXcd free_waves_(double lambda, int ell) const {
    Eigen::VectorXcd j(radii_.size());
    for (size_t i = 0; i < radii_.size(); ++i) j(i) = channel_regular(ell, lambda, radii_[i]);
    return j;
  }

  // Rows a_r(j) = sqrt(w_j) v(r_j) k^+(r, r_j) for the distinct radii.
  Eigen::MatrixXcd rows_(SpectralPoint pt, int ell) const {
    const RadialGrid& g = model_->grid();
    auto vf = [this](double r) { return model_->v(r); };
    Eigen::MatrixXcd C = quadrature_rows([&](double a, double b) { return channel_kernel(ell, pt, a, b); }, g, vf, radii_);
    for (int j = 0; j < g.N; ++j) C.col(j) /= std::sqrt(g.weights[j]);
    return C;
  }

  // v R_0^+ v on the grid (scaled), without U.
  Eigen::MatrixXcd born_matrix_(SpectralPoint pt, int ell) const {
    const RadialGrid& g = model_->grid();
    Eigen::MatrixXcd A = model_->T(ell).matrix + model_->delta_M(pt, ell);
    for (int i = 0; i < g.N; ++i) A(i, i) -= model_->U(g.nodes[i]);
    return A;
  }

  Eigen::VectorXcd scaled_vj_(double lambda, int ell) const {
    const RadialGrid& g = model_->grid();
    Eigen::VectorXcd b(g.N);
    for (int i = 0; i < g.N; ++i)
      b(i) = std::sqrt(g.weights[i]) * model_->v(g.nodes[i]) * channel_regular(ell, lambda, g.nodes[i]);
    return b;
  }

  // full = true: the single vector R_0^+ v M^{-1} v j.  Otherwise g_1..g_k.
  std::vector<Eigen::VectorXcd> born_waves_(double lambda, int ell, int k, bool full) const {
    SpectralPoint pt{lambda, +1};
    Eigen::MatrixXcd Ar = rows_(pt, ell);
    Eigen::VectorXcd b = scaled_vj_(lambda, ell);
    if (full) return {Ar * model_->inverse(pt, ell).apply(b)};
    const RadialGrid& g = model_->grid();
    Eigen::VectorXd U(g.N);
    for (int i = 0; i < g.N; ++i) U(i) = model_->U(g.nodes[i]);
    Eigen::MatrixXcd A = k > 1 ? born_matrix_(pt, ell) : Eigen::MatrixXcd();
    std::vector<Eigen::VectorXcd> out;
    Eigen::VectorXcd x = U.asDiagonal() * b;  // U v j
    for (int m = 1; m <= k; ++m) {
      out.push_back(Ar * x);
      if (m < k) x = U.asDiagonal() * (A * x);
    }
    return out;
  }

  const SpectralModel* model_;
  std::vector<RadialPair> pairs_;
  int L_;
  std::vector<double> radii_;
  std::vector<std::array<int, 2>> idx_;
  std::vector<std::vector<double>> weights_;
};

// ---- Stone integral ----------------------------------------------------------

struct FilonConfig {
  int order = 12;             // Lobatto points per panel
  double lambda_min = 1e-10;  // dyadic panels in u stop at lambda_min^2
  double rel_tol = 1e-3;      // err_est / |value| above this flags the row
};

struct PropagatorRequest {
  std::vector<double> times;
  std::vector<RadialPair> pairs;
  Multiplier multiplier;
  int channels = 2;
  FilonConfig quad;
  int born = -1;  // -1: full kernel; k >= 0: k-th Born term only
};

struct TimeRow {
  double t = 0;
  int pair_id = 0;
  cplx value = 0;
  double err_est = 0;
  bool accepted = true;
};

struct TimeSeries {
  std::vector<TimeRow> rows;
  std::string multiplier;
  std::string classification;

  // accepted rows only
  void write_csv(std::ostream& os) const {
    os << "t,pair_id,re,im,abs,err_est,multiplier,classification\n";
    os.precision(17);
    for (const auto& r : rows) {
      if (!r.accepted) continue;
      os << r.t << ',' << r.pair_id << ',' << r.value.real() << ',' << r.value.imag() << ',' << std::abs(r.value)
         << ',' << r.err_est << ',' << multiplier << ',' << classification << '\n';
    }
  }
  // |K| against t for one pair (accepted rows)
  std::pair<std::vector<double>, std::vector<double>> abs_series(int pair_id) const {
    std::vector<double> t, a;
    for (const auto& r : rows)
      if (r.pair_id == pair_id && r.accepted) {
        t.push_back(r.t);
        a.push_back(std::abs(r.value));
      }
    return {t, a};
  }
};

// (1/2 pi i) int mult(t, u) chi(sqrt u) [R^+ - R^-](u) du.  The amplitude is
// sampled once on Lobatto panels of the phase variable w (w = u for
// Schrodinger, w = sqrt(u + m^2) otherwise); every t then costs one Filon
// moment evaluation per panel, independent of t.
class StoneIntegrator {
 public:
  StoneIntegrator(const DensityEngine& eng, Multiplier mult, double lambda1, FilonConfig quad = {}, int born = -1)
      : mult_(mult), quad_(quad), chi_{lambda1} {
    if (quad_.order < 4) throw ConfigError("Filon order must be >= 4");
    if (!(quad_.lambda_min > 0 && quad_.lambda_min < lambda1)) throw ConfigError("lambda_min must be in (0, lambda1)");
    const size_t P = eng.pairs().size();
    auto dens = [&](double lambda) { return born < 0 ? eng.density(lambda) : eng.born_density(lambda, born); };
    double m = mult_.mass;
    // w - m, computed without cancellation for small u
    auto wm_of_u = [&](double u) { return mult_.schrodinger() ? u : u / (std::sqrt(u + m * m) + m); };

    double umax = 4 * lambda1 * lambda1, umin = quad_.lambda_min * quad_.lambda_min;
    std::vector<double> uedges{umax};
    while (uedges.back() / 2 > umin) uedges.push_back(uedges.back() / 2);
    umin_ = uedges.back();
    std::reverse(uedges.begin(), uedges.end());

    const GaussRule& gl = gauss_lobatto(quad_.order);
    const int n = quad_.order;
    Eigen::MatrixXd V(n, n);
    std::vector<double> Pk(n);
    for (int i = 0; i < n; ++i) {
      legendre_all(n, gl.x[i], Pk.data());
      for (int k = 0; k < n; ++k) V(i, k) = Pk[k];
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> Vlu(V);

    coef_.assign(P, {});
    std::vector<double> shared;  // density at the previous panel's right edge
    for (size_t p = 0; p + 1 < uedges.size(); ++p) {
      double ua = uedges[p], ub = uedges[p + 1];
      // panel in w - m (relative coordinate keeps resolution near threshold)
      double a = wm_of_u(ua), b = wm_of_u(ub);
      double c = 0.5 * (a + b), h = 0.5 * (b - a);
      Eigen::MatrixXd S(n, P);
      for (int i = 0; i < n; ++i) {
        double wrel = i == 0 ? a : i == n - 1 ? b : c + h * gl.x[i];
        double w = mult_.schrodinger() ? wrel : wrel + m;
        double u = i == 0 ? ua : i == n - 1 ? ub : mult_.schrodinger() ? wrel : wrel * (wrel + 2 * m);
        double lambda = std::sqrt(u);
        std::vector<double> d = (i == 0 && !shared.empty()) ? shared : dens(lambda);
        if (i == n - 1) shared = d;
        double jac = mult_.schrodinger() ? 1.0 : 2 * w;  // du/dw
        double extra = mult_.sine() ? 1.0 / w : 1.0;
        for (size_t q = 0; q < P; ++q) S(i, q) = chi_(lambda) * d[q] * jac * extra;
        if (p == 0 && i == 0) low_.push_back(d), low_u_.push_back(u);
        if (p < 3 && i > 0) low_.push_back(d), low_u_.push_back(u);
      }
      Eigen::MatrixXd C = Vlu.solve(S);
      panels_.push_back({a, b});
      for (size_t q = 0; q < P; ++q) {
        std::vector<cplx> cq(n);
        for (int k = 0; k < n; ++k) cq[k] = C(k, q);
        coef_[q].push_back(std::move(cq));
      }
    }
    tail_.resize(P);
    tail_err_.resize(P);
    resonant_ = eng.model() && (eng.model()->classify().kind == Classification::FirstKind ||
                                eng.model()->classify().kind == Classification::ThirdKind);
    for (size_t q = 0; q < P; ++q) fit_tail_(q);
  }

  size_t pairs() const { return coef_.size(); }
  size_t panels() const { return panels_.size(); }
  double u_min() const { return umin_; }

  struct Value {
    cplx value;
    double err;
  };

  Value evaluate(double t, size_t q) const {
    cplx F = 0;
    double err = 0;
    const int n = quad_.order;
    for (size_t p = 0; p < panels_.size(); ++p) {
      const auto& c = coef_[q][p];
      F += filon_panel(c, panels_[p][0], panels_[p][1], t);
      // top two modes, minus their linear interpolant: the interpolation
      // error vanishes at the Lobatto end points
      std::vector<cplx> top(n, 0.0);
      top[n - 1] = c[n - 1];
      top[n - 2] = c[n - 2];
      cplx up = c[n - 1] + c[n - 2], dn = (n % 2 ? 1.0 : -1.0) * (c[n - 1] - c[n - 2]);
      top[0] -= 0.5 * (up + dn);
      top[1] -= 0.5 * (up - dn);
      err += std::abs(filon_panel(top, panels_[p][0], panels_[p][1], t));
    }
    double tail_err = tail_err_[q];
    if (mult_.schrodinger()) {
      tail_err += std::abs(tail_[q]) * std::min(1.0, t * umin_);
      return {F + tail_[q], err + tail_err};
    }
    if (mult_.mass == 0) {
      // wave: the kernel is real and has no oscillating prefactor
      double lam = std::sqrt(umin_);
      tail_err += std::abs(tail_[q]) * std::min(1.0, t * lam) * (mult_.sine() ? t : 1.0);
      double v = mult_.sine() ? F.imag() + t * tail_[q] : F.real() + tail_[q];
      return {v, err + tail_err};
    }
    // Klein-Gordon: F is the half-wave integral int e^{itw} A dw; the kernel is
    // Re F (cos) or Im F (sin).  Report F (cos) or -iF (sin), whose real part is
    // the kernel and whose modulus is the envelope free of the e^{itm} beat.
    double m = mult_.mass;
    F = F * std::polar(1.0, t * m) + std::polar(1.0, t * m) * tail_[q] / (mult_.sine() ? m : 1.0);
    tail_err = (tail_err + std::abs(tail_[q]) * std::min(1.0, t * umin_ / m)) / (mult_.sine() ? m : 1.0);
    return {mult_.sine() ? cplx(0, -1) * F : F, err + tail_err};
  }

  // integral of the density over [0, u_min] (closed form from the low panels)
  double tail(size_t q) const { return tail_[q]; }

 private:
  // Resonant l = 0 channel: d(u) ~ 1/(u q(log u)) with q a positive quadratic,
  // integrated in closed form. Otherwise d ~ u^p from the two lowest samples.
  void fit_tail_(size_t q) {
    std::vector<double> x, y;
    for (size_t i = 0; i < low_.size(); ++i) {
      x.push_back(std::log(low_u_[i]));
      y.push_back(low_[i][q]);
    }
    double X = std::log(umin_);
    auto power_tail = [&]() {
      double p = std::log(std::abs(y[1] / y[0])) / (x[1] - x[0]);
      if (!std::isfinite(p) || p <= -0.9) p = -0.9;
      return y[0] * umin_ / (p + 1);
    };
    if (!resonant_) {
      tail_[q] = power_tail();
      tail_err_[q] = std::abs(tail_[q]);
      return;
    }
    auto quad_tail = [&](size_t lo, size_t hi) -> std::optional<double> {
      // 1/(u d) = A x^2 + B x + D
      Eigen::MatrixXd M(hi - lo, 3);
      Eigen::VectorXd r(hi - lo);
      for (size_t i = lo; i < hi; ++i) {
        M.row(i - lo) << x[i] * x[i], x[i], 1.0;
        r(i - lo) = 1.0 / (low_u_[i] * y[i]);
      }
      Eigen::Vector3d c = M.colPivHouseholderQr().solve(r);
      double A = c(0), B = c(1), D = c(2);
      double disc = 4 * A * D - B * B;
      if (!(disc > 0) || !std::isfinite(disc)) return std::nullopt;
      double s = std::sqrt(disc);
      double sgn = A > 0 ? 1.0 : -1.0;
      return sgn * (2 / s) * (std::atan((2 * A * X + B) / s) + sgn * M_PI / 2);
    };
    size_t n = x.size();
    auto full = quad_tail(0, n), half = quad_tail(0, n / 2 + 2);
    if (!full) {
      tail_[q] = power_tail();
      tail_err_[q] = std::abs(tail_[q]);
      return;
    }
    tail_[q] = *full;
    tail_err_[q] = half ? std::abs(*full - *half) : std::abs(*full);
  }

  Multiplier mult_;
  FilonConfig quad_;
  Cutoff chi_;
  double umin_ = 0;
  bool resonant_ = false;
  std::vector<std::array<double, 2>> panels_;
  std::vector<std::vector<std::vector<cplx>>> coef_;  // [pair][panel][k]
  std::vector<std::vector<double>> low_;             // densities on the lowest panels
  std::vector<double> low_u_;
  std::vector<double> tail_, tail_err_;
};

inline std::string series_classification(const SpectralModel* model) {
  return model ? classification_name(model->classify().kind) : "free";
}

inline TimeSeries run_integrator(const StoneIntegrator& S, const PropagatorRequest& req, const SpectralModel* model) {
  TimeSeries ts;
  ts.multiplier = req.multiplier.name();
  ts.classification = series_classification(model);
  for (double t : req.times) {
    if (!(t > 2)) throw ConfigError("times must be > 2");
    for (size_t q = 0; q < S.pairs(); ++q) {
      auto v = S.evaluate(t, q);
      TimeRow row{t, static_cast<int>(q), v.value, v.err, true};
      row.accepted = v.err <= req.quad.rel_tol * std::abs(v.value);
      ts.rows.push_back(row);
    }
  }
  return ts;
}

// model == nullptr is V = 0
inline TimeSeries stone_evolve(const PropagatorRequest& req, const SpectralModel* model, double lambda1 = 0.25) {
  if (model) lambda1 = model->config().lambda1;
  DensityEngine eng(model, req.pairs, req.channels);
  StoneIntegrator S(eng, req.multiplier, lambda1, req.quad, req.born);
  return run_integrator(S, req, model);
}

inline TimeSeries born_term(int k, PropagatorRequest req, const SpectralModel* model, double lambda1 = 0.25) {
  if (k < 0 || k > 3) throw ConfigError("born_term: k must be in 0..3");
  req.born = k;
  return stone_evolve(req, model, lambda1);
}

// ---- box oracle ----------------------------------------------------------------

struct StaleOracle : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OracleConfig {
  double R = 800;     // Dirichlet wall
  double h = 0.005;   // mesh; breakpoints of V should be multiples of h
  double lambda1 = 0.25;
  int channels = 2;
};

// Finite-volume discretisation of -(1/r^3)(r^3 f')' + l(l+2)/r^2 f + V f on
// [0, R] with f(R) = 0, symmetrised by the r^3 cell masses, diagonalised below
// (2 lambda1)^2 with LAPACK's MRRR tridiagonal solver.
class EigOracle {
 public:
  EigOracle(const PotentialSpec* V, std::vector<RadialPair> pairs, OracleConfig cfg) : pairs_(std::move(pairs)), cfg_(cfg) {
    for (const auto& p : pairs_)
      if (!(p.r > 0 && p.rp > 0 && p.r < cfg_.R && p.rp < cfg_.R)) throw ConfigError("pair radii must lie in (0, R)");
    double Emax = 4 * cfg_.lambda1 * cfg_.lambda1;
    for (int l = 0; l <= cfg_.channels; ++l) modes_.push_back(channel_(V, l, Emax));
  }

  double t_box() const { return cfg_.R / 4; }

  // sum_j mult(t, E_j) chi(sqrt E_j) f_j(r) f_j(r'), resummed over channels; bound states
  // (E_j < 0) only when include_bound is set (then with chi = 1 and mult at E_j).
  std::vector<cplx> evaluate(double t, const Multiplier& mult, bool include_bound = false) const {
    if (t > t_box()) throw StaleOracle("t exceeds R/4; the box recurrence pollutes the continuum");
    Cutoff chi{cfg_.lambda1};
    std::vector<cplx> out(pairs_.size(), 0.0);
    for (int l = 0; l <= cfg_.channels; ++l) {
      const Modes& M = modes_[l];
      for (size_t j = 0; j < M.E.size(); ++j) {
        double E = M.E[j];
        cplx w;
        if (E > 0) w = mult(t, E) * chi(std::sqrt(E));
        else if (include_bound) w = mult.schrodinger() ? std::polar(1.0, t * E) : cplx(0.0);
        else continue;
        for (size_t q = 0; q < pairs_.size(); ++q) {
          const auto& p = pairs_[q];
          out[q] += w * ((l + 1) / (2 * M_PI * M_PI)) * chebyshev_u(l, p.cos_theta) * M.f[j][2 * q] * M.f[j][2 * q + 1];
        }
      }
    }
    return out;
  }

  size_t bound_states() const {
    size_t n = 0;
    for (const auto& M : modes_)
      for (double E : M.E) n += E < 0;
    return n;
  }

 private:
  struct Modes {
    std::vector<double> E;
    std::vector<std::vector<double>> f;  // f_j at (r, r') of each pair
  };

  Modes channel_(const PotentialSpec* V, int l, double Emax) const {
    const double h = cfg_.h;
    const int n_all = static_cast<int>(std::llround(cfg_.R / h));  // nodes 0..n_all-1, f(R) = 0
    const int first = l == 0 ? 0 : 1;
    const int n = n_all - first;
    const GaussRule& g = gauss_legendre(4);
    std::vector<double> mass(n), diag(n), off(n - 1);
    auto face = [&](int i) { return (i + 0.5) * h; };  // face between node i and i+1
    for (int k = 0; k < n; ++k) {
      int i = k + first;
      double a = i == 0 ? 0.0 : face(i - 1), b = face(i), ri = i * h;
      mass[k] = (std::pow(b, 4) - std::pow(a, 4)) / 4;
      double pot = 0;
      for (auto [lo, hi] : {std::array<double, 2>{a, ri}, std::array<double, 2>{ri, b}}) {
        if (hi <= lo) continue;
        for (size_t q = 0; q < g.x.size(); ++q) {
          double r = 0.5 * (lo + hi) + 0.5 * (hi - lo) * g.x[q];
          pot += 0.5 * (hi - lo) * g.w[q] * r * r * r * (V ? (*V)(r) : 0.0);
        }
      }
      double cent = l * (l + 2) * (b * b - a * a) / 2;
      double kin = std::pow(b, 3) / h + (i == 0 ? 0.0 : std::pow(a, 3) / h);
      diag[k] = (kin + pot + cent) / mass[k];
    }
    for (int k = 0; k + 1 < n; ++k) off[k] = -std::pow(face(k + first), 3) / h / std::sqrt(mass[k] * mass[k + 1]);

    // all eigenvalues below Emax, then eigenvectors in chunks
    std::vector<double> E = eigen_(diag, off, Emax, nullptr, 0, 0);
    Modes M;
    const int chunk = 32;
    std::vector<double> Z;
    for (int il = 1; il <= static_cast<int>(E.size()); il += chunk) {
      int iu = std::min<int>(static_cast<int>(E.size()), il + chunk - 1);
      std::vector<double> w = eigen_(diag, off, Emax, &Z, il, iu);
      for (size_t j = 0; j < w.size(); ++j) {
        const double* z = Z.data() + j * n;
        M.E.push_back(w[j]);
        std::vector<double> vals;
        for (const auto& p : pairs_)
          for (double r : {p.r, p.rp}) vals.push_back(sample_(z, mass, first, r));
        M.f.push_back(std::move(vals));
      }
    }
    return M;
  }

  // f(r) = g/sqrt(mass), linear interpolation between nodes
  double sample_(const double* z, const std::vector<double>& mass, int first, double r) const {
    double x = r / cfg_.h;
    int i = static_cast<int>(std::floor(x));
    double s = x - i;
    auto f = [&](int node) {
      int k = node - first;
      if (k < 0 || k >= static_cast<int>(mass.size())) return 0.0;
      return z[k] / std::sqrt(mass[k]);
    };
    return (1 - s) * f(i) + s * f(i + 1);
  }

  static std::vector<double> eigen_(const std::vector<double>& d0, const std::vector<double>& e0, double Emax,
                                    std::vector<double>* Z, int il, int iu) {
    int n = static_cast<int>(d0.size());
    std::vector<double> d = d0, e = e0;
    e.push_back(0);
    double vl = -1e300, vu = Emax, abstol = 0;
    int m = 0, info = 0, ldz = n;
    std::vector<double> w(n);
    std::vector<int> isuppz(2 * n);
    int lwork = 20 * n, liwork = 10 * n;
    std::vector<double> work(lwork);
    std::vector<int> iwork(liwork);
    if (!Z) {
      double dummy = 0;
      dstevr_("N", "V", &n, d.data(), e.data(), &vl, &vu, &il, &iu, &abstol, &m, w.data(), &dummy, &ldz,
              isuppz.data(), work.data(), &lwork, iwork.data(), &liwork, &info);
    } else {
      Z->assign(static_cast<size_t>(n) * (iu - il + 1), 0.0);
      dstevr_("V", "I", &n, d.data(), e.data(), &vl, &vu, &il, &iu, &abstol, &m, w.data(), Z->data(), &ldz,
              isuppz.data(), work.data(), &lwork, iwork.data(), &liwork, &info);
    }
    if (info != 0) throw std::runtime_error("dstevr failed, info = " + std::to_string(info));
    w.resize(m);
    return w;
  }

  std::vector<RadialPair> pairs_;
  OracleConfig cfg_;
  std::vector<Modes> modes_;
};

}  // namespace lowdisp
