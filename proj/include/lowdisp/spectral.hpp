#pragma once

// Zero-energy analysis on the channel decomposition.
//
// Every operator of the form U + v K v with a radial kernel K is block
// diagonal in the angular momentum ell; each block acts on flattened radial
// functions u = r^{3/2} f on supp(v).  One instance of each harmonic block is
// tracked.  Vectors are in the scaled Galerkin coordinates of discretize.hpp
// (plain dot products are L^2(dr) inner products).
//
// ell = 0 is the only channel that sees the constant kernel, so P lives there:
// P = v_t v_t^T / |V|_1 with v_t(r) = sqrt(2 pi^2) r^{3/2} v(r).

#include <Eigen/Dense>
#include <json.hpp>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lowdisp/discretize.hpp"
#include "lowdisp/kernels.hpp"
#include "lowdisp/potentials.hpp"

namespace lowdisp {

enum class Classification { Regular, FirstKind, SecondKind, ThirdKind };

inline const char* classification_name(Classification c) {
  switch (c) {
    case Classification::Regular: return "Regular";
    case Classification::FirstKind: return "FirstKind";
    case Classification::SecondKind: return "SecondKind";
    case Classification::ThirdKind: return "ThirdKind";
  }
  return "?";
}

struct AmbiguousThreshold : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NearSingular : std::runtime_error {
  double lambda;
  NearSingular(const std::string& what, double l) : std::runtime_error(what), lambda(l) {}
};

struct DegenerateResonance : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class InvertMethod { direct, JN, schur };

struct SpectralConfig {
  PotentialSpec potential;
  int max_ell = 2;
  int N = 128;      // nodes on supp(v)
  int order = 16;
  double lambda1 = 0.25;
  double tol = 1e-8;      // kernel detection: sigma < tol * sigma_max
  double R_out = 60;      // radius for sampled resonance functions / eigenfunctions
};

struct KernelVector {
  int ell = 0;
  Eigen::VectorXd phi;   // scaled coordinates, unit norm
  double sigma = 0;      // |eigenvalue of T| / sigma_max before it was zeroed
};

// A zero-energy solution g = -G_0 v phi sampled on [0, R_out].
struct SampledSolution {
  int ell = 0;
  std::vector<double> r, u;   // flattened u = r^{3/2} g
  double a = 0;               // r^2 psi(r) at r = 0.8 R_out
  double a_limit = 0;         // exact lim r^2 psi from the tail coefficient
  double norm_vpsi = 0;       // <v psi, v psi>
  double residual = 0;        // |(-Delta + V) g|_2 / |g|_2 on the sample grid
  bool resonance = false;
};

struct Moments {
  int ell = 0;
  double m0 = 0, m0_err = 0;  // int V psi
  double m1 = 0, m1_err = 0;  // |int x V psi| (one component is nonzero for the tracked instance)
};

struct ZeroEnergyData {
  Classification kind = Classification::Regular;
  std::vector<ChannelOperator> T;                 // as assembled, one per ell
  std::vector<std::vector<double>> sigma;         // |eig T| / sigma_max, ascending, per ell
  std::vector<double> sigma_max;
  std::vector<KernelVector> S1;                   // orthonormal kernel of T
  Eigen::MatrixXd T1;                             // S1 P S1 in S1 coordinates
  std::vector<KernelVector> S2;                   // kernel of T1
  std::vector<KernelVector> Gamma;                // S1 minus S2 (resonance directions)
  Eigen::MatrixXd D2;                             // (S2 v G1 v S2)^{-1} in S2 coordinates
  std::vector<ChannelOperator> D0;                // (T + S1)^{-1} per ell
  std::vector<Moments> moments;                   // one per S2 vector

  int rank_S1() const { return static_cast<int>(S1.size()); }
  int rank_S2() const { return static_cast<int>(S2.size()); }
};

// Residual exponent fit over a lambda sample set.
struct ExpansionRow {
  std::string name;
  std::vector<double> lambdas, residuals;
  double exponent = 0, r2 = 0, required = 0;
  double value = 0;            // a reported scalar (e.g. error at lambda = 1e-4)
  bool inconclusive = false;   // fit R^2 < 0.95
  bool pass = false;
};

namespace detail {

inline std::vector<double> logspace(double a, double b, int n) {
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = std::exp(std::log(a) + (std::log(b) - std::log(a)) * i / (n - 1));
  return x;
}

// Least-squares line y = c0 + c1 x; returns {c0, c1, R^2}.
inline std::array<double, 3> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  size_t n = x.size();
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  double c1 = sxy / sxx, c0 = my - c1 * mx;
  double r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return {c0, c1, r2};
}

inline void fit_exponent(ExpansionRow& row) {
  std::vector<double> x, y;
  for (size_t i = 0; i < row.lambdas.size(); ++i)
    if (row.residuals[i] > 0) {
      x.push_back(std::log(row.lambdas[i]));
      y.push_back(std::log(row.residuals[i]));
    }
  if (x.size() < 3) {
    row.inconclusive = true;
    return;
  }
  auto f = linear_fit(x, y);
  row.exponent = f[1];
  row.r2 = f[2];
  row.inconclusive = f[2] < 0.95;
  row.pass = row.exponent >= row.required;
}

}  // namespace detail

class SpectralModel {
 public:
  explicit SpectralModel(SpectralConfig cfg) : cfg_(std::move(cfg)) {
    const PotentialSpec& V = cfg_.potential;
    if (V.empty()) throw PotentialError("empty potential: U is undefined where V = 0");
    if (cfg_.max_ell < 0 || cfg_.max_ell > 8) throw ConfigError("max_ell must be in 0..8");
    GridConfig gc;
    gc.N = cfg_.N;
    gc.R = V.support();
    gc.order = cfg_.order;
    gc.sub_order = 2 * cfg_.order;
    gc.breaks = V.breaks();
    grid_ = build_grid(gc);
    vt_.resize(grid_.N);
    l1_ = 0;
    for (int i = 0; i < grid_.N; ++i) {
      double r = grid_.nodes[i];
      vt_(i) = std::sqrt(2 * M_PI * M_PI) * std::pow(r, 1.5) * v(r) * std::sqrt(grid_.weights[i]);
    }
    l1_ = vt_.squaredNorm();
    classify_();
  }

  const SpectralConfig& config() const { return cfg_; }
  const RadialGrid& grid() const { return grid_; }
  const ZeroEnergyData& classify() const { return data_; }
  int max_ell() const { return cfg_.max_ell; }

  double v(double r) const { return cfg_.potential.v(r); }
  double U(double r) const { return cfg_.potential.sign(r); }
  const Eigen::VectorXd& v_tilde() const { return vt_; }
  double V_l1() const { return l1_; }

  ChannelOperator T(int ell) const { return data_.T.at(ell); }

  // T with the detected kernel eigenvalues set to zero (exact threshold).
  Eigen::MatrixXd T_threshold(int ell) const {
    const Channel& c = ch_.at(ell);
    return c.Q * c.mu.asDiagonal() * c.Q.transpose();
  }

  ChannelOperator P() const {
    ChannelOperator op;
    op.matrix = (vt_ * vt_.transpose() / l1_).cast<std::complex<double>>();
    op.ell = 0;
    op.meaning = Meaning::projection;
    return op;
  }

  // v G_j v in channel ell (j = -1: the constant kernel).
  ChannelOperator vGjv(int j, int ell) const {
    auto vf = [this](double r) { return v(r); };
    return assemble([&](double r, double s) { return gj_channel(j, ell, r, s); }, grid_, vf, vf);
  }

  // v (k^±(lambda) - k(0)) v
  Eigen::MatrixXcd delta_M(SpectralPoint pt, int ell) const {
    auto vf = [this](double r) { return v(r); };
    auto op = assemble([&](double r, double s) { return channel_kernel_delta(ell, pt, r, s); }, grid_, vf, vf);
    return op.matrix;
  }

  ChannelOperator assemble_M(SpectralPoint pt, int ell) const {
    check_lambda_(pt.lambda);
    ChannelOperator op;
    op.matrix = T_threshold(ell).cast<std::complex<double>>() + delta_M(pt, ell);
    op.ell = ell;
    op.lambda = pt.lambda;
    op.sign = pt.sign;
    op.meaning = Meaning::M;
    return op;
  }

  // Block solver for M^{-1} in the eigenbasis of T: kernel block by Schur
  // complement, so tiny lambda keeps relative accuracy.
  class Inverse {
   public:
    Eigen::VectorXcd apply(const Eigen::VectorXcd& b) const {
      if (!K_.size()) return lu_.solve(b);
      Eigen::VectorXcd bt = Q_.transpose() * b;
      Eigen::VectorXcd bK = gather_(bt, K_), bP = gather_(bt, P_);
      Eigen::VectorXcd yP = luA_.solve(bP);
      Eigen::VectorXcd xK = luS_.solve(bK - MKP_ * yP);
      Eigen::VectorXcd xP = yP - AinvMPK_ * xK;
      Eigen::VectorXcd xt(bt.size());
      scatter_(xt, K_, xK);
      scatter_(xt, P_, xP);
      return Q_ * xt;
    }
    Eigen::MatrixXcd matrix() const {
      Eigen::Index n = Q_.rows();
      Eigen::MatrixXcd X(n, n);
      for (Eigen::Index j = 0; j < n; ++j) X.col(j) = apply(Eigen::VectorXcd::Unit(n, j));
      return X;
    }
    // Schur complement on the kernel block (k x k); B^{-1} = 1 + schur^{-1} there.
    const Eigen::MatrixXcd& schur() const { return S_; }
    const std::vector<int>& kernel_index() const { return K_; }

   private:
    friend class SpectralModel;
    static Eigen::VectorXcd gather_(const Eigen::VectorXcd& x, const std::vector<int>& idx) {
      Eigen::VectorXcd y(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) y(i) = x(idx[i]);
      return y;
    }
    static void scatter_(Eigen::VectorXcd& x, const std::vector<int>& idx, const Eigen::VectorXcd& y) {
      for (size_t i = 0; i < idx.size(); ++i) x(idx[i]) = y(i);
    }
    Eigen::MatrixXd Q_;
    std::vector<int> K_, P_;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu_, luA_, luS_;
    Eigen::MatrixXcd MKP_, AinvMPK_, S_;
  };

  Inverse inverse(SpectralPoint pt, int ell) const {
    check_lambda_(pt.lambda);
    const Channel& c = ch_.at(ell);
    Inverse inv;
    Eigen::MatrixXcd dM = delta_M(pt, ell);
    if (c.kernel.empty()) {
      inv.lu_.compute(c.Q * c.mu.asDiagonal() * c.Q.transpose() + dM);
      return inv;
    }
    inv.Q_ = c.Q;
    inv.K_ = c.kernel;
    for (int i = 0; i < grid_.N; ++i)
      if (std::find(c.kernel.begin(), c.kernel.end(), i) == c.kernel.end()) inv.P_.push_back(i);
    Eigen::MatrixXcd Mt = c.Q.transpose() * dM * c.Q;
    auto sub = [&](const std::vector<int>& a, const std::vector<int>& b) {
      Eigen::MatrixXcd X(a.size(), b.size());
      for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) X(i, j) = Mt(a[i], b[j]);
      return X;
    };
    Eigen::MatrixXcd A = sub(inv.P_, inv.P_);
    for (size_t i = 0; i < inv.P_.size(); ++i) A(i, i) += c.mu(inv.P_[i]);
    inv.luA_.compute(A);
    inv.MKP_ = sub(inv.K_, inv.P_);
    inv.AinvMPK_ = inv.luA_.solve(sub(inv.P_, inv.K_));
    inv.S_ = sub(inv.K_, inv.K_) - inv.MKP_ * inv.AinvMPK_;
    inv.luS_.compute(inv.S_);
    return inv;
  }

  ChannelOperator invert_M(SpectralPoint pt, int ell, InvertMethod method = InvertMethod::schur) const {
    ChannelOperator op;
    op.ell = ell;
    op.lambda = pt.lambda;
    op.sign = pt.sign;
    op.meaning = Meaning::generic;
    if (method == InvertMethod::schur) {
      op.matrix = inverse(pt, ell).matrix();
      detail::check_finite(op.matrix);
      return op;
    }
    Eigen::MatrixXcd M = assemble_M(pt, ell).matrix;
    const Eigen::Index n = M.rows();
    if (method == InvertMethod::direct) {
      Eigen::PartialPivLU<Eigen::MatrixXcd> lu(M);
      if (!(lu.rcond() > 1e-14)) {
        std::ostringstream os;
        os << "invert_M: M is numerically singular (condition > 1e14) at lambda = " << pt.lambda;
        throw NearSingular(os.str(), pt.lambda);
      }
      op.matrix = lu.inverse();
      return op;
    }
    // (M + S1)^{-1} + (M + S1)^{-1} S1 B^{-1} S1 (M + S1)^{-1},  B = S1 - S1 (M + S1)^{-1} S1
    Eigen::MatrixXd S = S1_matrix(ell);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(M + S.cast<std::complex<double>>());
    Eigen::MatrixXcd MSi = lu.inverse();
    const Channel& c = ch_.at(ell);
    if (c.kernel.empty()) {
      op.matrix = MSi;
      return op;
    }
    Eigen::MatrixXd E(n, c.kernel.size());
    for (size_t k = 0; k < c.kernel.size(); ++k) E.col(k) = c.Q.col(c.kernel[k]);
    Eigen::MatrixXcd Ec = E.cast<std::complex<double>>();
    Eigen::MatrixXcd B = Eigen::MatrixXcd::Identity(E.cols(), E.cols()) - Ec.adjoint() * MSi * Ec;
    Eigen::MatrixXcd Binv = B.inverse();
    op.matrix = MSi + MSi * Ec * Binv * Ec.adjoint() * MSi;
    return op;
  }

  // Projection onto the kernel of T_ell.
  Eigen::MatrixXd S1_matrix(int ell) const {
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(grid_.N, grid_.N);
    for (const auto& k : data_.S1)
      if (k.ell == ell) S += k.phi * k.phi.transpose();
    return S;
  }
  Eigen::MatrixXd S2_matrix(int ell) const {
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(grid_.N, grid_.N);
    for (const auto& k : data_.S2)
      if (k.ell == ell) S += k.phi * k.phi.transpose();
    return S;
  }

  // S2 D2 S2 embedded in channel ell.
  Eigen::MatrixXd D2_matrix(int ell) const {
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(grid_.N, grid_.N);
    for (size_t i = 0; i < data_.S2.size(); ++i)
      for (size_t j = 0; j < data_.S2.size(); ++j)
        if (data_.S2[i].ell == ell && data_.S2[j].ell == ell)
          X += data_.D2(i, j) * data_.S2[i].phi * data_.S2[j].phi.transpose();
    return X;
  }

  // f(lambda) = <phi, B(lambda)^{-1} phi> for the resonance direction phi (ell = 0).
  std::complex<double> f_scalar(SpectralPoint pt) const {
    if (data_.Gamma.empty()) throw std::logic_error("f_scalar: no resonance direction");
    const Eigen::VectorXd& phi = data_.Gamma.front().phi;
    Inverse inv = inverse(pt, 0);
    const Channel& c = ch_.at(0);
    // B^{-1} = 1 + schur^{-1} on the kernel block
    Eigen::VectorXcd pk(c.kernel.size());
    for (size_t k = 0; k < c.kernel.size(); ++k) pk(k) = c.Q.col(c.kernel[k]).dot(phi);
    Eigen::VectorXcd y = inv.luS_.solve(pk);
    return pk.dot(y) + pk.squaredNorm();
  }

  // g = -G_0 v phi on a grid out to R_out (breaks at the support and the potential breaks).
  SampledSolution solution(const KernelVector& k) const {
    SampledSolution s;
    s.ell = k.ell;
    const PotentialSpec& V = cfg_.potential;
    GridConfig gc;
    gc.R = std::max(cfg_.R_out, 2 * V.support());
    gc.order = cfg_.order;
    gc.sub_order = 2 * cfg_.order;
    gc.breaks = V.breaks();
    gc.breaks.push_back(V.support());
    gc.N = 2 * cfg_.N;
    RadialGrid out = build_grid(gc);
    Eigen::VectorXd u = zero_energy_solution_(k, out.nodes);
    s.r = out.nodes;
    s.u.assign(u.data(), u.data() + u.size());
    int nu = k.ell + 1;
    double Yn = 1 / std::sqrt(2 * M_PI * M_PI);
    double r8 = 0.8 * gc.R;
    Eigen::VectorXd u8 = zero_energy_solution_(k, {r8});
    s.a = std::sqrt(r8) * u8(0) * Yn;
    // tail u = -C r^{1/2 - nu} / (2 nu),  C = int s^{nu + 1/2} v phi ds
    double C = tail_moment_(k, nu + 0.5);
    s.a_limit = k.ell == 0 ? -C / 2 * Yn : 0.0;
    // v psi = -v G_0 v phi = U phi - T phi
    Eigen::VectorXd vpsi = (diag_U_() * k.phi) - data_.T[k.ell].matrix.real() * k.phi;
    s.norm_vpsi = vpsi.squaredNorm();
    if (s.norm_vpsi < 1e-12) throw DegenerateResonance("resonance function: <v psi, v psi> vanishes");
    // (-d^2/dr^2 + (nu^2 - 1/4)/r^2 + V) u
    Eigen::VectorXd upp = second_derivative(out, u);
    double num = 0, den = 0;
    for (int i = 0; i < out.N; ++i) {
      double r = out.nodes[i];
      double res = -upp(i) + (nu * nu - 0.25) / (r * r) * u(i) + V(r) * u(i);
      num += res * res * out.weights[i];
      den += u(i) * u(i) * out.weights[i];
    }
    s.residual = std::sqrt(num / den);
    s.resonance = std::abs(s.a_limit) > 1e-6;
    return s;
  }

  // psi for FirstKind / ThirdKind, eigenfunctions for S2; empty when Regular.
  std::vector<SampledSolution> resonance_function() const {
    std::vector<SampledSolution> out;
    for (const auto& k : data_.Gamma) out.push_back(solution(k));
    return out;
  }
  std::vector<SampledSolution> eigenfunctions() const {
    std::vector<SampledSolution> out;
    for (const auto& k : data_.S2) out.push_back(solution(k));
    return out;
  }

  // Samples of -(G_0 v phi) at arbitrary radii (flattened).
  Eigen::VectorXd zero_energy_solution(const KernelVector& k, const std::vector<double>& r) const {
    return zero_energy_solution_(k, r);
  }

  // Gram matrix <G_0 v phi_i, G_0 v phi_j> over (0, inf) for the S2 vectors.
  Eigen::MatrixXd eigen_gram() const {
    int m = data_.rank_S2();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, m);
    const PotentialSpec& V = cfg_.potential;
    GridConfig gc;
    gc.R = std::max(cfg_.R_out, 2 * V.support());
    gc.order = cfg_.order;
    gc.sub_order = 2 * cfg_.order;
    gc.breaks = V.breaks();
    gc.breaks.push_back(V.support());
    gc.N = 2 * cfg_.N;
    RadialGrid out = build_grid(gc);
    std::vector<Eigen::VectorXd> u(m);
    for (int i = 0; i < m; ++i) u[i] = zero_energy_solution_(data_.S2[i], out.nodes);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        if (data_.S2[i].ell != data_.S2[j].ell) continue;
        int nu = data_.S2[i].ell + 1;
        double s = 0;
        for (int q = 0; q < out.N; ++q) s += u[i](q) * u[j](q) * out.weights[q];
        // exact tail beyond R: u = -C r^{1/2 - nu} / (2 nu)
        double Ci = tail_moment_(data_.S2[i], nu + 0.5), Cj = tail_moment_(data_.S2[j], nu + 0.5);
        if (nu >= 2) s += Ci * Cj / (4.0 * nu * nu) * std::pow(gc.R, 2 - 2 * nu) / (2 * nu - 2);
        G(i, j) = s;
      }
    return G;
  }

  // Residual of M - (identified terms) for Lemma-2.2-type expansions, m = 0..3.
  // Nystrom Hilbert-Schmidt proxy summed over channels with multiplicity (ell + 1)^2.
  double expansion_residual(int m, SpectralPoint pt, int N = 32) const {
    GridConfig gc;
    gc.N = N;
    gc.R = cfg_.potential.support();
    gc.order = 16;
    gc.sub_order = 32;
    gc.breaks = cfg_.potential.breaks();
    RadialGrid g = build_grid(gc);
    using quad = boost::multiprecision::cpp_bin_float_quad;
    double total = 0;
    for (int ell = 0; ell <= cfg_.max_ell; ++ell) {
      double s = 0;
      for (int i = 0; i < g.N; ++i)
        for (int j = 0; j <= i; ++j) {
          double r = g.nodes[i], q = g.nodes[j];
          std::complex<double> k = m <= 1 ? channel_expansion_residual<double>(m, ell, pt, r, q)
                                          : channel_expansion_residual<quad>(m, ell, pt, r, q);
          double e = std::norm(v(r) * k * v(q)) * g.weights[i] * g.weights[j];
          s += (i == j ? 1 : 2) * e;
        }
      total += (ell + 1) * (ell + 1) * s;
    }
    return std::sqrt(total);
  }

  std::vector<ExpansionRow> expansion_report(const std::string& kind) const;

  nlohmann::json report_json() const;

  // sigma_min / sigma_max of T_ell: the certificate for a tuned threshold.
  double threshold_certificate(int ell) const { return data_.sigma.at(ell).front(); }

  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  struct Channel {
    Eigen::MatrixXd Q;      // eigenvectors of T_ell
    Eigen::VectorXd mu;     // eigenvalues, kernel ones zeroed
    std::vector<int> kernel;
  };

  void check_lambda_(double lambda) const {
    if (!(lambda > 0)) throw std::domain_error("lambda must be positive");
    if (lambda > 2 * cfg_.lambda1) {
      std::ostringstream os;
      os << "lambda = " << lambda << " outside (0, 2 lambda1]";
      if (warnings_.size() < 16) warnings_.push_back(os.str());
    }
  }

  Eigen::MatrixXd diag_U_() const {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(grid_.N, grid_.N);
    for (int i = 0; i < grid_.N; ++i) D(i, i) = U(grid_.nodes[i]);
    return D;
  }

  // int s^p v(s) phi(s) ds  (phi flattened)
  double tail_moment_(const KernelVector& k, double p) const {
    double s = 0;
    for (int i = 0; i < grid_.N; ++i) {
      double r = grid_.nodes[i];
      s += std::pow(r, p) * v(r) * k.phi(i) * std::sqrt(grid_.weights[i]);
    }
    return s;
  }

  Eigen::VectorXd zero_energy_solution_(const KernelVector& k, const std::vector<double>& r) const {
    auto vf = [this](double x) { return v(x); };
    Eigen::MatrixXcd C = quadrature_rows([&](double a, double b) { return channel_kernel_zero(k.ell, a, b); },
                                         grid_, vf, r);
    Eigen::VectorXcd f = to_samples(grid_, k.phi.cast<std::complex<double>>());
    return -(C * f).real();
  }

  void classify_() {
    ZeroEnergyData& d = data_;
    auto vf = [this](double r) { return v(r); };
    const int L = cfg_.max_ell;
    ch_.resize(L + 1);
    double global_max = 0;
    std::vector<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>> eig(L + 1);
    for (int ell = 0; ell <= L; ++ell) {
      ChannelOperator T = assemble([&](double r, double s) { return channel_kernel_zero(ell, r, s); }, grid_, vf, vf);
      for (int i = 0; i < grid_.N; ++i) T.matrix(i, i) += U(grid_.nodes[i]);
      T.ell = ell;
      T.meaning = Meaning::T;
      Eigen::MatrixXd Tr = T.matrix.real();
      Tr = 0.5 * (Tr + Tr.transpose());
      eig[ell].compute(Tr);
      global_max = std::max(global_max, eig[ell].eigenvalues().cwiseAbs().maxCoeff());
      d.T.push_back(std::move(T));
    }
    for (int ell = 0; ell <= L; ++ell) {
      const auto& es = eig[ell];
      Channel& c = ch_[ell];
      c.Q = es.eigenvectors();
      c.mu = es.eigenvalues();
      std::vector<double> sg(grid_.N);
      for (int i = 0; i < grid_.N; ++i) sg[i] = std::abs(c.mu(i)) / global_max;
      std::vector<double> sorted = sg;
      std::sort(sorted.begin(), sorted.end());
      d.sigma.push_back(sorted);
      d.sigma_max.push_back(global_max);
      for (int i = 0; i < grid_.N; ++i) {
        if (sg[i] < cfg_.tol) {
          if (sg[i] > 0.1 * cfg_.tol) {
            std::ostringstream os;
            os << "ambiguous threshold in channel " << ell << ": sigma/sigma_max = " << sg[i]
               << " is within a factor 10 of tol = " << cfg_.tol << "; refine the grid or retune the coupling";
            throw AmbiguousThreshold(os.str());
          }
          c.kernel.push_back(i);
          KernelVector k;
          k.ell = ell;
          k.phi = c.Q.col(i);
          Eigen::Index imax;
          k.phi.cwiseAbs().maxCoeff(&imax);
          if (k.phi(imax) < 0) k.phi = -k.phi;
          k.sigma = sg[i];
          d.S1.push_back(k);
        } else if (sg[i] < 10 * cfg_.tol) {
          std::ostringstream os;
          os << "ambiguous threshold in channel " << ell << ": sigma/sigma_max = " << sg[i]
             << " is within a factor 10 of tol = " << cfg_.tol << "; refine the grid or retune the coupling";
          throw AmbiguousThreshold(os.str());
        }
      }
      for (int i : c.kernel) c.mu(i) = 0;
      // D0 = (T + S1)^{-1}
      Eigen::VectorXd inv = c.mu;
      for (int i = 0; i < grid_.N; ++i) inv(i) = c.mu(i) == 0 ? 1.0 : 1 / c.mu(i);
      ChannelOperator D0;
      D0.matrix = (c.Q * inv.asDiagonal() * c.Q.transpose()).cast<std::complex<double>>();
      D0.ell = ell;
      d.D0.push_back(std::move(D0));
    }
    // T1 = S1 P S1; only ell = 0 vectors see P
    int k = d.rank_S1();
    d.T1 = Eigen::MatrixXd::Zero(k, k);
    std::vector<int> zero;
    for (int i = 0; i < k; ++i)
      if (d.S1[i].ell == 0) zero.push_back(i);
    for (int i : zero)
      for (int j : zero) d.T1(i, j) = d.S1[i].phi.dot(vt_) * vt_.dot(d.S1[j].phi) / l1_;
    for (int i = 0; i < k; ++i)
      if (d.S1[i].ell != 0) d.S2.push_back(d.S1[i]);
    if (!zero.empty()) {
      Eigen::MatrixXd B(zero.size(), zero.size());
      for (size_t a = 0; a < zero.size(); ++a)
        for (size_t b = 0; b < zero.size(); ++b) B(a, b) = d.T1(zero[a], zero[b]);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
      for (size_t a = 0; a < zero.size(); ++a) {
        KernelVector kv;
        kv.ell = 0;
        kv.phi = Eigen::VectorXd::Zero(grid_.N);
        for (size_t b = 0; b < zero.size(); ++b) kv.phi += es.eigenvectors()(b, a) * d.S1[zero[b]].phi;
        kv.sigma = es.eigenvalues()(a);
        if (std::abs(es.eigenvalues()(a)) < cfg_.tol)
          d.S2.push_back(kv);
        else
          d.Gamma.push_back(kv);
      }
    }
    if (k == 0)
      d.kind = Classification::Regular;
    else if (d.S2.empty())
      d.kind = Classification::FirstKind;
    else if (d.rank_S2() == k)
      d.kind = Classification::SecondKind;
    else
      d.kind = Classification::ThirdKind;
    // D2 = (S2 v G1 v S2)^{-1}
    int m = d.rank_S2();
    if (m > 0) {
      Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, m);
      std::vector<Eigen::MatrixXd> g1(L + 1);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          int ell = d.S2[i].ell;
          if (d.S2[j].ell != ell) continue;
          if (!g1[ell].size()) g1[ell] = vGjv(1, ell).matrix.real();
          G(i, j) = d.S2[i].phi.dot(g1[ell] * d.S2[j].phi);
        }
      d.D2 = G.inverse();
      for (const auto& kv : d.S2) d.moments.push_back(moments_(kv));
    }
  }

  Moments moments_(const KernelVector& k) const {
    Moments mo;
    mo.ell = k.ell;
    // V psi = v phi (flattened); moments by node quadrature and by the finer panel rule
    auto integrate = [&](double p, bool fine) {
      if (!fine) return tail_moment_(k, p);
      double s = 0;
      Eigen::VectorXd f = to_samples(grid_, k.phi.cast<std::complex<double>>()).real();
      for (int pn = 0; pn < grid_.panels(); ++pn) {
        const PanelRule& pr = grid_.panel_rules[pn];
        for (size_t a = 0; a < pr.pts.size(); ++a) {
          double val = 0;
          for (int j = 0; j < grid_.order; ++j) val += pr.basis(a, j) * f(pn * grid_.order + j);
          s += std::pow(pr.pts[a], p) * v(pr.pts[a]) * val * pr.wts[a];
        }
      }
      return s;
    };
    if (k.ell == 0) {
      double c = std::sqrt(2 * M_PI * M_PI);
      mo.m0 = c * integrate(1.5, false);
      mo.m0_err = std::abs(mo.m0 - c * integrate(1.5, true));
    }
    if (k.ell == 1) {
      double c = M_PI / std::sqrt(2.0);
      mo.m1 = std::abs(c * integrate(2.5, false));
      mo.m1_err = std::abs(mo.m1 - std::abs(c * integrate(2.5, true)));
    }
    return mo;
  }

  SpectralConfig cfg_;
  RadialGrid grid_;
  Eigen::VectorXd vt_;
  double l1_ = 0;
  std::vector<Channel> ch_;
  ZeroEnergyData data_;
  mutable std::vector<std::string> warnings_;
};

inline std::vector<ExpansionRow> SpectralModel::expansion_report(const std::string& kind) const {
  std::vector<ExpansionRow> rows;
  const auto lams = detail::logspace(1e-4, 1e-1, 24);
  const ZeroEnergyData& d = data_;
  if (kind == "Mexp") {
    const double req[4] = {1.5, 1.5, 3.5, 5.5};
    for (int m = 0; m <= 3; ++m) {
      ExpansionRow row;
      row.name = "Mexp" + std::to_string(m);
      row.required = req[m];
      row.lambdas = lams;
      for (double l : lams) row.residuals.push_back(expansion_residual(m, {l, +1}));
      detail::fit_exponent(row);
      rows.push_back(row);
    }
  } else if (kind == "MplusS") {
    // M + S1 stays invertible on (0, 2 lambda1]
    ExpansionRow row;
    row.name = "MplusS";
    row.lambdas = detail::logspace(1e-4, 2 * cfg_.lambda1, 12);
    double worst = 0;
    for (double l : row.lambdas) {
      double c = 0;
      for (int ell = 0; ell <= cfg_.max_ell; ++ell) {
        Eigen::MatrixXcd A = assemble_M({l, +1}, ell).matrix + S1_matrix(ell).cast<std::complex<double>>();
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(A);
        const auto& s = svd.singularValues();
        c = std::max(c, s(0) / s(s.size() - 1));
      }
      row.residuals.push_back(c);
      worst = std::max(worst, c);
    }
    row.value = worst;
    row.pass = worst < 1e8;
    rows.push_back(row);
  } else if (kind == "first" || kind == "third") {
    if (!d.Gamma.empty()) {
      // 1/(lambda^2 f) linear in log lambda on [1e-4, 1e-2]
      ExpansionRow row;
      row.name = kind + ".f";
      row.lambdas = detail::logspace(1e-4, 1e-2, 24);
      std::vector<double> x, yr, yi;
      for (double l : row.lambdas) {
        std::complex<double> f = f_scalar({l, +1});
        std::complex<double> y = 1.0 / (l * l * f);
        x.push_back(std::log(l));
        yr.push_back(y.real());
        yi.push_back(y.imag());
        row.residuals.push_back(std::abs(y));
      }
      auto fr = detail::linear_fit(x, yr), fi = detail::linear_fit(x, yi);
      // complex R^2: explained variance of both parts together
      double ssr = 0, sst = 0, mr = 0, mi = 0;
      for (size_t i = 0; i < x.size(); ++i) {
        mr += yr[i] / x.size();
        mi += yi[i] / x.size();
      }
      for (size_t i = 0; i < x.size(); ++i) {
        ssr += std::pow(yr[i] - fr[0] - fr[1] * x[i], 2) + std::pow(yi[i] - fi[0] - fi[1] * x[i], 2);
        sst += std::pow(yr[i] - mr, 2) + std::pow(yi[i] - mi, 2);
      }
      row.r2 = 1 - ssr / sst;
      row.exponent = fr[1];       // slope a
      row.value = fi[0];          // imaginary part of the intercept z
      row.required = 0.999;
      row.pass = row.r2 >= 0.999 && std::abs(fi[0]) > 1e-12 * std::abs(fr[0]);
      rows.push_back(row);
    }
    if (kind == "third" && !d.S2.empty()) {
      auto r = expansion_report("second");
      for (auto& x : r) x.name = "third." + x.name;
      rows.insert(rows.end(), r.begin(), r.end());
    }
  } else if (kind == "second") {
    if (!d.S2.empty()) {
      // lambda^2 M^{-1} -> D2 on the channels carrying S2
      ExpansionRow row;
      row.name = "second";
      row.required = 0.9;
      row.lambdas = lams;
      for (double l : lams) {
        double num = 0, den = 0;
        for (int ell = 0; ell <= cfg_.max_ell; ++ell) {
          Eigen::MatrixXd D = D2_matrix(ell);
          if (D.norm() == 0) continue;
          Eigen::MatrixXcd X = l * l * invert_M({l, +1}, ell).matrix - D.cast<std::complex<double>>();
          num += X.squaredNorm();
          den += D.squaredNorm();
        }
        row.residuals.push_back(std::sqrt(num / den));
      }
      row.value = row.residuals.front();
      detail::fit_exponent(row);
      rows.push_back(row);
    }
  } else if (kind == "long") {
    if (!d.S2.empty()) {
      // M^{-1} = D2/lambda^2 + log(lambda) K1 + K2 + O(lambda^{0+}): fit K1, K2, report the remainder
      ExpansionRow row;
      row.name = "long";
      row.required = 0.5;
      row.lambdas = lams;
      for (int ell = 0; ell <= cfg_.max_ell; ++ell) {
        Eigen::MatrixXd D = D2_matrix(ell);
        if (D.norm() == 0) continue;
        std::vector<Eigen::MatrixXcd> R;
        for (double l : lams) R.push_back(invert_M({l, +1}, ell).matrix - D.cast<std::complex<double>>() / (l * l));
        // K1, K2 from the two smallest lambda; the remainder is measured on the rest
        double a = std::log(lams[0]), b = std::log(lams[1]);
        Eigen::MatrixXcd K1 = (R[0] - R[1]) / (a - b), K2 = R[0] - a * K1;
        if (row.residuals.empty()) row.residuals.assign(lams.size() - 2, 0.0);
        for (size_t i = 2; i < lams.size(); ++i)
          row.residuals[i - 2] += (R[i] - std::log(lams[i]) * K1 - K2).squaredNorm();
      }
      row.lambdas.erase(row.lambdas.begin(), row.lambdas.begin() + 2);
      for (double& x : row.residuals) x = std::sqrt(x);
      detail::fit_exponent(row);
      rows.push_back(row);
    }
  } else if (kind == "cancel") {
    // S2 v G2 v S2 on eigen-directions with ell >= 2 (the P_e V x block), and ell = 1 for contrast
    for (int ell = 1; ell <= cfg_.max_ell; ++ell) {
      Eigen::MatrixXd S = S2_matrix(ell);
      if (S.norm() == 0) continue;
      Eigen::MatrixXd G2 = vGjv(2, ell).matrix.real();
      ExpansionRow row;
      row.name = "cancel.ell" + std::to_string(ell);
      row.value = (S * G2 * S).norm();
      row.required = 1e-8;
      row.pass = ell >= 2 ? row.value <= 1e-8 : true;
      rows.push_back(row);
    }
  } else {
    throw ConfigError("expansion_report: unknown kind " + kind);
  }
  return rows;
}

inline nlohmann::json SpectralModel::report_json() const {
  using nlohmann::json;
  const ZeroEnergyData& d = data_;
  json j;
  j["verdict"] = classification_name(d.kind);
  j["potential"] = {{"family", family_name(cfg_.potential.family)},
                    {"c", cfg_.potential.c},
                    {"c2", cfg_.potential.c2},
                    {"support", cfg_.potential.support()},
                    {"decay_class", std::isfinite(cfg_.potential.decay_class) ? json(cfg_.potential.decay_class)
                                                                              : json("inf")}};
  j["grid"] = {{"N", grid_.N}, {"R", grid_.R}, {"order", grid_.order}};
  j["rank_S1"] = d.rank_S1();
  j["rank_S2"] = d.rank_S2();
  json ch = json::array();
  for (size_t ell = 0; ell < d.sigma.size(); ++ell) {
    std::vector<double> s(d.sigma[ell].begin(), d.sigma[ell].begin() + std::min<size_t>(4, d.sigma[ell].size()));
    int nk = 0;
    for (const auto& k : d.S1) nk += k.ell == static_cast<int>(ell);
    ch.push_back({{"ell", ell}, {"sigma_smallest", s}, {"kernel_dim", nk}});
  }
  j["channels"] = ch;
  json mom = json::array();
  for (const auto& m : d.moments)
    mom.push_back({{"ell", m.ell}, {"m0", m.m0}, {"m0_err", m.m0_err}, {"m1", m.m1}, {"m1_err", m.m1_err}});
  j["moments"] = mom;
  if (!d.Gamma.empty()) {
    auto psi = resonance_function();
    j["resonance"] = {{"a", psi[0].a}, {"a_limit", psi[0].a_limit}, {"norm_vpsi", psi[0].norm_vpsi}};
  }
  return j;
}

}  // namespace lowdisp
