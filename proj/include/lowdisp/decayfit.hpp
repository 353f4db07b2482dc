#pragma once
// Least-squares fits of |K(t)| against the decay-rate menu.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "discretize.hpp"
#include "evolution.hpp"
#include "spectral.hpp"

namespace lowdisp {

enum class Rate { one, inv_log, inv_t, inv_tlog, inv_tlog2, t_m32, t_m2 };

inline const char* rate_name(Rate r) {
  switch (r) {
    case Rate::one: return "1";
    case Rate::inv_log: return "1/log t";
    case Rate::inv_t: return "1/t";
    case Rate::inv_tlog: return "1/(t log t)";
    case Rate::inv_tlog2: return "1/(t log^2 t)";
    case Rate::t_m32: return "t^-3/2";
    case Rate::t_m2: return "t^-2";
  }
  return "?";
}

inline double rate_value(Rate r, double t) {
  double L = std::log(t);
  switch (r) {
    case Rate::one: return 1;
    case Rate::inv_log: return 1 / L;
    case Rate::inv_t: return 1 / t;
    case Rate::inv_tlog: return 1 / (t * L);
    case Rate::inv_tlog2: return 1 / (t * L * L);
    case Rate::t_m32: return std::pow(t, -1.5);
    case Rate::t_m2: return 1 / (t * t);
  }
  return 0;
}

enum class SpatialWeight { none, log_plus, bracket_half };

// w(x) = 1 + log^+ |x|  or  <x>^{1/2}
inline double spatial_weight(SpatialWeight w, double r) {
  switch (w) {
    case SpatialWeight::none: return 1;
    case SpatialWeight::log_plus: return 1 + std::max(0.0, std::log(r));
    case SpatialWeight::bracket_half: return std::pow(1 + r * r, 0.25);
  }
  return 1;
}

struct RateModel {
  std::vector<Rate> basis;
  SpatialWeight weight = SpatialWeight::none;
};

struct CollinearBasis : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FitResult {
  std::vector<Rate> basis;
  std::vector<double> coefficients;
  double residual = 0;   // max |fit - data| / max |data|
  double condition = 0;  // of the column-equilibrated, relatively weighted design
  Rate dominant = Rate::one;
  double slope = 0;      // of log |K| against log t
  double coefficient(Rate r) const {
    for (size_t i = 0; i < basis.size(); ++i)
      if (basis[i] == r) return coefficients[i];
    return 0;
  }
  nlohmann::json to_json() const {
    nlohmann::json j;
    for (size_t i = 0; i < basis.size(); ++i) j["coefficients"][rate_name(basis[i])] = coefficients[i];
    j["residual"] = residual;
    j["condition"] = condition;
    j["dominant"] = rate_name(dominant);
    j["slope"] = slope;
    return j;
  }
};

// Relative least squares: minimise sum_i (sum_k c_k b_k(t_i) / y_i - 1)^2, so
// every decade of t counts equally.  y are magnitudes; `scale` divides y first
// (the spatial weight w(x) w(y) of the pair).
inline FitResult fit(const std::vector<double>& t, const std::vector<double>& y, const RateModel& model,
                     double scale = 1.0) {
  if (model.basis.empty()) throw ConfigError("fit: empty basis");
  if (t.size() != y.size()) throw ConfigError("fit: size mismatch");
  if (t.size() < 12) throw ConfigError("fit: need at least 12 time samples");
  for (double s : t)
    if (!(s > 2)) throw ConfigError("fit: times must be > 2");
  auto [tmin, tmax] = std::minmax_element(t.begin(), t.end());
  if (std::log10(*tmax / *tmin) < 3 - 1e-9) throw ConfigError("fit: samples must span at least 3 decades");
  const Eigen::Index n = static_cast<Eigen::Index>(t.size()), k = static_cast<Eigen::Index>(model.basis.size());
  Eigen::MatrixXd A(n, k);
  Eigen::VectorXd b = Eigen::VectorXd::Ones(n);
  std::vector<double> ys(t.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    ys[i] = std::abs(y[i]) / scale;
    if (!(ys[i] > 0)) throw ConfigError("fit: series must be nonzero");
    for (Eigen::Index j = 0; j < k; ++j) A(i, j) = rate_value(model.basis[j], t[i]) / ys[i];
  }
  Eigen::VectorXd cs = A.colwise().norm().transpose();
  Eigen::MatrixXd As = A * cs.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(As, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  FitResult r;
  r.basis = model.basis;
  r.condition = sv(0) / sv(sv.size() - 1);
  if (!(r.condition <= 1e10))
    throw CollinearBasis("fit: design condition " + std::to_string(r.condition) + " > 1e10; widen the t-range");
  Eigen::VectorXd c = svd.solve(b).cwiseQuotient(cs);
  r.coefficients.assign(c.data(), c.data() + k);
  double sup = 0, res = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double f = 0;
    for (Eigen::Index j = 0; j < k; ++j) f += c(j) * rate_value(model.basis[j], t[i]);
    sup = std::max(sup, ys[i]);
    res = std::max(res, std::abs(f - ys[i]));
  }
  r.residual = res / sup;
  double tmid = std::sqrt(*tmin * *tmax), best = -1;
  for (Eigen::Index j = 0; j < k; ++j) {
    double contrib = std::abs(c(j) * rate_value(model.basis[j], tmid));
    if (contrib > best) best = contrib, r.dominant = model.basis[j];
  }
  std::vector<double> lx, ly;
  for (Eigen::Index i = 0; i < n; ++i) {
    lx.push_back(std::log(t[i]));
    ly.push_back(std::log(ys[i]));
  }
  r.slope = detail::linear_fit(lx, ly)[1];
  return r;
}

// Fit one pair of a time series, dividing by w(x) w(y) under the model's weight.
inline FitResult fit(const TimeSeries& ts, int pair_id, const RadialPair& pair, const RateModel& model) {
  auto [t, a] = ts.abs_series(pair_id);
  return fit(t, a, model, spatial_weight(model.weight, pair.r) * spatial_weight(model.weight, pair.rp));
}

struct OrthogonalityFlags {
  bool m0_zero = false, m1_zero = false;
};

inline OrthogonalityFlags orthogonality_flags(const ZeroEnergyData& d, double tol = 1e-8) {
  OrthogonalityFlags f{true, true};
  if (d.moments.empty()) f = {false, false};
  for (const auto& m : d.moments) {
    f.m0_zero = f.m0_zero && std::abs(m.m0) <= tol;
    f.m1_zero = f.m1_zero && std::abs(m.m1) <= tol;
  }
  return f;
}

inline RateModel expected_model(Classification c, const Multiplier& mult, OrthogonalityFlags flags = {}) {
  RateModel m;
  switch (c) {
    case Classification::Regular: m.basis = {Rate::t_m2}; break;
    case Classification::FirstKind:
    case Classification::ThirdKind: m.basis = {Rate::inv_log, Rate::inv_t, Rate::inv_tlog, Rate::inv_tlog2}; break;
    case Classification::SecondKind:
      m.basis = flags.m0_zero && flags.m1_zero ? std::vector<Rate>{Rate::t_m2} : std::vector<Rate>{Rate::inv_t};
      break;
  }
  if (!mult.schrodinger()) m.basis.push_back(Rate::t_m32);
  return m;
}

// Leading rank-one factor of a (symmetric) coefficient matrix over a pair grid.
struct RankOne {
  double ratio = 0;  // sigma_2 / sigma_1
  Eigen::VectorXd u;
  double scale = 0;  // C ~ scale u u^T, |u| = 1
};

inline RankOne rank_one(const Eigen::MatrixXd& C) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeThinU | Eigen::ComputeThinV);
  RankOne r;
  const auto& s = svd.singularValues();
  r.ratio = s.size() > 1 ? s(1) / s(0) : 0;
  r.u = svd.matrixU().col(0);
  double sign = (r.u.transpose() * C * r.u)(0) >= 0 ? 1.0 : -1.0;
  r.scale = sign * s(0);
  return r;
}

// max_i |a_i - b_i s| / max |b s| with s the least-squares scale of b onto a
inline double shape_mismatch(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double s = a.dot(b) / b.dot(b);
  return (a - s * b).cwiseAbs().maxCoeff() / (s * b).cwiseAbs().maxCoeff();
}

}  // namespace lowdisp
