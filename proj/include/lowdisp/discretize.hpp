#pragma once

// Radial grids and Nystrom assembly of channel integral operators.
//
// Grids are composite Gauss-Legendre panels in a mapped variable s (r = s
// for uniform grids, r = s^2 for graded ones).  Channel kernels are only
// continuous on the diagonal, so the panel holding a target point is split
// there and integrated against the Lagrange interpolant of the density.
// Operators are stored in the orthonormal basis l_i/sqrt(w_i), so Euclidean
// norms approximate L^2(dr) norms.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lowdisp/quadrature.hpp"

namespace lowdisp {

enum class Grading { uniform, graded };

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct AssemblyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GridConfig {
  int N = 128;  // requested node count; rounded up to whole panels
  double R = 1;
  Grading grading = Grading::graded;
  int order = 16;             // Gauss nodes per panel
  int sub_order = 32;         // nodes on each half of a split panel, and outer rule
  std::vector<double> breaks; // radii in (0, R) that must be panel edges
};

// Quadrature for int_{panel} k(r, s) f(s) ds with the panel split at r;
// f is known at the panel's nodes, interp(q, j) are the Lagrange weights.
struct SplitRule {
  int panel = -1;
  std::vector<double> pts, wts;
  Eigen::MatrixXd interp;
};

// Outer rule on one panel for the diagonal Galerkin block: points, weights,
// basis values basis(a, i) and the split rule at each point.
struct PanelRule {
  std::vector<double> pts, wts;
  Eigen::MatrixXd basis;
  std::vector<SplitRule> splits;
};

struct RadialGrid {
  std::vector<double> nodes;    // r_i, increasing
  std::vector<double> weights;  // w_i
  std::vector<double> edges;    // panel edges in r
  double R = 0;
  int N = 0;
  int order = 0;
  int sub_order = 0;
  Grading grading = Grading::graded;
  std::vector<SplitRule> node_rules;
  std::vector<PanelRule> panel_rules;

  double to_s(double r) const { return grading == Grading::graded ? std::sqrt(r) : r; }
  double to_r(double s) const { return grading == Grading::graded ? s * s : s; }
  double jac(double s) const { return grading == Grading::graded ? 2 * s : 1.0; }
  int panels() const { return static_cast<int>(edges.size()) - 1; }

  // panel p with edges[p] <= r < edges[p+1]; -1 outside [0, R)
  int panel_of(double r) const {
    if (r < 0 || r >= R) return -1;
    auto it = std::upper_bound(edges.begin(), edges.end(), r);
    return static_cast<int>(it - edges.begin()) - 1;
  }

  // Split rule for a target r; panel = -1 when r lies on an edge or off the grid.
  SplitRule split_rule(double r) const {
    SplitRule sr;
    int p = panel_of(r);
    if (p < 0) return sr;
    double a = edges[p], b = edges[p + 1];
    double tol = 1e-14 * (b - a);
    if (r - a <= tol || b - r <= tol) return sr;
    sr.panel = p;
    const auto& g = gauss_legendre(sub_order);
    double sa = to_s(a), sr_ = to_s(r), sb = to_s(b);
    std::vector<double> ps(order);
    for (int j = 0; j < order; ++j) ps[j] = to_s(nodes[p * order + j]);
    sr.interp.resize(2 * sub_order, order);
    std::vector<double> L(order);
    int q = 0;
    for (auto [lo, hi] : {std::pair{sa, sr_}, std::pair{sr_, sb}}) {
      double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
      for (int k = 0; k < sub_order; ++k, ++q) {
        double s = c + h * g.x[k];
        sr.pts.push_back(to_r(s));
        sr.wts.push_back(h * g.w[k] * jac(s));
        lagrange_basis(ps, s, L.data());
        for (int j = 0; j < order; ++j) sr.interp(q, j) = L[j];
      }
    }
    return sr;
  }
};

inline RadialGrid build_grid(const GridConfig& cfg) {
  if (cfg.N < 16) throw ConfigError("build_grid: N must be at least 16");
  if (!(cfg.R > 0)) throw ConfigError("build_grid: R must be positive");
  if (cfg.order < 2 || cfg.sub_order < 2) throw ConfigError("build_grid: panel order too small");
  RadialGrid g;
  g.R = cfg.R;
  g.order = cfg.order;
  g.sub_order = cfg.sub_order;
  g.grading = cfg.grading;
  // segment edges in s
  std::vector<double> seg{0.0};
  std::vector<double> br = cfg.breaks;
  std::sort(br.begin(), br.end());
  for (double b : br) {
    if (!(b > 0 && b < cfg.R)) throw ConfigError("build_grid: breakpoint outside (0, R)");
    if (g.to_s(b) > seg.back()) seg.push_back(g.to_s(b));
  }
  seg.push_back(g.to_s(cfg.R));
  int nseg = static_cast<int>(seg.size()) - 1;
  int npanel = std::max((cfg.N + cfg.order - 1) / cfg.order, nseg);
  // distribute panels proportionally to segment length in s, at least one each
  double total = seg.back();
  std::vector<int> count(nseg, 1);
  int left = npanel - nseg;
  std::vector<double> want(nseg);
  for (int i = 0; i < nseg; ++i) want[i] = npanel * (seg[i + 1] - seg[i]) / total;
  while (left > 0) {
    int best = 0;
    for (int i = 1; i < nseg; ++i)
      if (want[i] - count[i] > want[best] - count[best]) best = i;
    ++count[best];
    --left;
  }
  const auto& gl = gauss_legendre(cfg.order);
  std::vector<double> edges_s{0.0};
  for (int i = 0; i < nseg; ++i)
    for (int k = 1; k <= count[i]; ++k) edges_s.push_back(seg[i] + (seg[i + 1] - seg[i]) * k / count[i]);
  edges_s.back() = seg.back();
  for (double s : edges_s) g.edges.push_back(g.to_r(s));
  // segment ends exactly at the requested radii
  {
    std::vector<double> exact;
    for (double b : br)
      if (exact.empty() || b > exact.back()) exact.push_back(b);
    size_t e = 0;
    for (int i = 0; i + 1 < nseg; ++i) {
      e += count[i];
      g.edges[e] = exact[i];
    }
  }
  g.edges.back() = cfg.R;
  for (size_t p = 0; p + 1 < edges_s.size(); ++p) {
    double c = 0.5 * (edges_s[p] + edges_s[p + 1]), h = 0.5 * (edges_s[p + 1] - edges_s[p]);
    for (int k = 0; k < cfg.order; ++k) {
      double s = c + h * gl.x[k];
      g.nodes.push_back(g.to_r(s));
      g.weights.push_back(h * gl.w[k] * g.jac(s));
    }
  }
  g.N = static_cast<int>(g.nodes.size());
  g.node_rules.reserve(g.N);
  for (double r : g.nodes) g.node_rules.push_back(g.split_rule(r));
  const auto& go = gauss_legendre(cfg.sub_order);
  std::vector<double> L(cfg.order), ps(cfg.order);
  for (int p = 0; p < g.panels(); ++p) {
    PanelRule pr;
    double sa = edges_s[p], sb = edges_s[p + 1], c = 0.5 * (sa + sb), h = 0.5 * (sb - sa);
    for (int j = 0; j < cfg.order; ++j) ps[j] = g.to_s(g.nodes[p * cfg.order + j]);
    pr.basis.resize(cfg.sub_order, cfg.order);
    for (int a = 0; a < cfg.sub_order; ++a) {
      double s = c + h * go.x[a];
      pr.pts.push_back(g.to_r(s));
      pr.wts.push_back(h * go.w[a] * g.jac(s));
      lagrange_basis(ps, s, L.data());
      for (int j = 0; j < cfg.order; ++j) pr.basis(a, j) = L[j];
      pr.splits.push_back(g.split_rule(pr.pts.back()));
    }
    g.panel_rules.push_back(std::move(pr));
  }
  return g;
}

enum class Meaning { M, T, R0, RV, projection, generic };

struct ChannelOperator {
  Eigen::MatrixXcd matrix;
  int ell = 0;
  double lambda = 0;
  int sign = 0;  // +1, -1, 0 for none
  Meaning meaning = Meaning::generic;

  Eigen::Index size() const { return matrix.rows(); }
  double hs() const { return matrix.norm(); }
};

namespace detail {

inline void check_finite(const Eigen::MatrixXcd& A) {
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      if (!std::isfinite(A(i, j).real()) || !std::isfinite(A(i, j).imag())) {
        std::ostringstream os;
        os << "assemble: non-finite entry at node pair (" << i << ", " << j << ")";
        throw AssemblyError(os.str());
      }
}

}  // namespace detail

// Sample-space quadrature rows: for each target radius r,
//   int_0^R k(r, s) right(s) f(s) ds ~ sum_j C(r, j) f(r_j).
template <class Kernel, class Right>
Eigen::MatrixXcd quadrature_rows(Kernel&& kernel, const RadialGrid& g, Right&& right, const std::vector<double>& targets) {
  Eigen::MatrixXcd C = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(targets.size()), g.N);
  for (size_t t = 0; t < targets.size(); ++t) {
    double r = targets[t];
    SplitRule sr = g.split_rule(r);
    int p = sr.panel;
    for (int j = 0; j < g.N; ++j) {
      if (p >= 0 && j / g.order == p) continue;
      C(t, j) = std::complex<double>(kernel(r, g.nodes[j])) * (right(g.nodes[j]) * g.weights[j]);
    }
    if (p >= 0)
      for (size_t q = 0; q < sr.pts.size(); ++q) {
        std::complex<double> kq = std::complex<double>(kernel(r, sr.pts[q])) * (right(sr.pts[q]) * sr.wts[q]);
        for (int j = 0; j < g.order; ++j) C(t, p * g.order + j) += kq * sr.interp(q, j);
      }
  }
  return C;
}

// Galerkin matrix in the orthonormal basis l_i / sqrt(w_i) (l_i the panel
// Lagrange polynomials; their Gauss mass matrix is exactly diag(w)):
//   A_ij = int int l_i(r) left(r) k(r, s) right(s) l_j(s) dr ds / sqrt(w_i w_j).
// Off the diagonal panel blocks this is left(r_i) k(r_i, r_j) right(r_j) sqrt(w_i w_j);
// diagonal blocks use an outer Gauss rule over split inner rules.  Symmetric
// kernels therefore give Hermitian matrices up to roundoff, and the action on
// scaled samples sqrt(w_j) f(r_j) approximates sqrt(w_i) (K f)(r_i).
template <class Kernel, class Left, class Right>
ChannelOperator assemble(Kernel&& kernel, const RadialGrid& g, Left&& left, Right&& right,
                         Meaning meaning = Meaning::generic) {
  using C = std::complex<double>;
  ChannelOperator op;
  op.meaning = meaning;
  op.matrix = Eigen::MatrixXcd::Zero(g.N, g.N);
  const int n = g.order;
  std::vector<double> lv(g.N), rv(g.N), sw(g.N);
  for (int i = 0; i < g.N; ++i) {
    lv[i] = left(g.nodes[i]);
    rv[i] = right(g.nodes[i]);
    sw[i] = std::sqrt(g.weights[i]);
  }
  for (int i = 0; i < g.N; ++i)
    for (int j = 0; j < g.N; ++j) {
      if (i / n == j / n) continue;
      op.matrix(i, j) = lv[i] * C(kernel(g.nodes[i], g.nodes[j])) * rv[j] * sw[i] * sw[j];
    }
  Eigen::MatrixXcd inner(g.sub_order, n);
  for (int p = 0; p < g.panels(); ++p) {
    const PanelRule& pr = g.panel_rules[p];
    for (int a = 0; a < g.sub_order; ++a) {
      double r = pr.pts[a];
      const SplitRule& sr = pr.splits[a];
      Eigen::RowVectorXcd I = Eigen::RowVectorXcd::Zero(n);
      for (size_t q = 0; q < sr.pts.size(); ++q) {
        C kq = C(kernel(r, sr.pts[q])) * (right(sr.pts[q]) * sr.wts[q]);
        for (int j = 0; j < n; ++j) I(j) += kq * sr.interp(q, j);
      }
      inner.row(a) = I * (left(r) * pr.wts[a]);
    }
    Eigen::MatrixXcd block = pr.basis.transpose().cast<C>() * inner;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) op.matrix(p * n + i, p * n + j) = block(i, j) / (sw[p * n + i] * sw[p * n + j]);
  }
  detail::check_finite(op.matrix);
  return op;
}

// Identity (or a multiplication operator) in the symmetric scaling.
template <class F>
ChannelOperator diagonal(const RadialGrid& g, F&& f, Meaning meaning = Meaning::generic) {
  ChannelOperator op;
  op.meaning = meaning;
  op.matrix = Eigen::MatrixXcd::Zero(g.N, g.N);
  for (int i = 0; i < g.N; ++i) op.matrix(i, i) = f(g.nodes[i]);
  return op;
}

// Conversions between samples f(r_i) and scaled vectors sqrt(w_i) f(r_i).
inline Eigen::VectorXcd to_scaled(const RadialGrid& g, const Eigen::VectorXcd& f) {
  Eigen::VectorXcd x(g.N);
  for (int i = 0; i < g.N; ++i) x(i) = std::sqrt(g.weights[i]) * f(i);
  return x;
}
inline Eigen::VectorXcd to_samples(const RadialGrid& g, const Eigen::VectorXcd& x) {
  Eigen::VectorXcd f(g.N);
  for (int i = 0; i < g.N; ++i) f(i) = x(i) / std::sqrt(g.weights[i]);
  return f;
}

// d^2 f / dr^2 at the nodes from the panel interpolant (in s), given samples f(r_i).
inline Eigen::VectorXd second_derivative(const RadialGrid& g, const Eigen::VectorXd& f) {
  const int n = g.order;
  Eigen::VectorXd out(g.N);
  std::vector<double> s(n), bw(n);
  Eigen::MatrixXd D(n, n);
  for (int p = 0; p < g.panels(); ++p) {
    for (int j = 0; j < n; ++j) s[j] = g.to_s(g.nodes[p * n + j]);
    for (int j = 0; j < n; ++j) {
      bw[j] = 1;
      for (int k = 0; k < n; ++k)
        if (k != j) bw[j] /= s[j] - s[k];
    }
    for (int i = 0; i < n; ++i) {
      double d = 0;
      for (int j = 0; j < n; ++j)
        if (j != i) {
          D(i, j) = bw[j] / bw[i] / (s[i] - s[j]);
          d -= D(i, j);
        }
      D(i, i) = d;
    }
    Eigen::VectorXd fp = f.segment(p * n, n);
    Eigen::VectorXd f1 = D * fp, f2 = D * f1;
    for (int i = 0; i < n; ++i) {
      double si = s[i];
      if (g.grading == Grading::graded)  // r = s^2
        out(p * n + i) = (f2(i) - f1(i) / si) / (4 * si * si);
      else
        out(p * n + i) = f2(i);
    }
  }
  return out;
}

// Hilbert-Schmidt norm of left(r) k(r, r') right(r') by product quadrature in r'.
template <class Kernel, class Left, class Right>
double hs_norm(Kernel&& kernel, const RadialGrid& g, Left&& left, Right&& right) {
  double total = 0;
  for (int i = 0; i < g.N; ++i) {
    double r = g.nodes[i];
    const SplitRule& sr = g.node_rules[i];
    double row = 0;
    for (int j = 0; j < g.N; ++j) {
      if (sr.panel >= 0 && j / g.order == sr.panel) continue;
      row += std::norm(std::complex<double>(kernel(r, g.nodes[j])) * right(g.nodes[j])) * g.weights[j];
    }
    for (size_t q = 0; q < sr.pts.size(); ++q)
      row += std::norm(std::complex<double>(kernel(r, sr.pts[q])) * right(sr.pts[q])) * sr.wts[q];
    total += std::norm(left(r)) * row * g.weights[i];
  }
  return std::sqrt(total);
}

struct SvdResult {
  std::vector<double> sigma;  // ascending
  Eigen::MatrixXcd U, V;      // columns are left/right singular vectors
  double sigma_max = 0;
};

// k smallest singular triplets, ascending, with a deterministic phase (largest entry real positive).
inline SvdResult svd_smallest(const Eigen::MatrixXcd& A, int k) {
  if (A.rows() != A.cols()) throw std::invalid_argument("svd_smallest: matrix must be square");
  if (k < 0 || k > A.rows()) throw std::out_of_range("svd_smallest: k exceeds matrix size");
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Eigen::Index n = s.size();
  SvdResult r;
  r.sigma_max = n ? s(0) : 0.0;
  r.U.resize(A.rows(), k);
  r.V.resize(A.rows(), k);
  for (int m = 0; m < k; ++m) {
    Eigen::Index idx = n - 1 - m;
    r.sigma.push_back(s(idx));
    Eigen::VectorXcd u = svd.matrixU().col(idx), v = svd.matrixV().col(idx);
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    std::complex<double> ph = std::abs(v(imax)) > 0 ? std::conj(v(imax)) / std::abs(v(imax)) : 1.0;
    r.U.col(m) = u * ph;
    r.V.col(m) = v * ph;
  }
  return r;
}

inline SvdResult svd_smallest(const ChannelOperator& op, int k) { return svd_smallest(op.matrix, k); }

}  // namespace lowdisp
