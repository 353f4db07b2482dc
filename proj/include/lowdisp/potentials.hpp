#pragma once

// Radial potential families, zero-energy shooting and threshold tuning.
//
// Convention: couplings are attraction strengths, V = -c on the well.  The
// zero-energy channel equation is -u'' + ((nu^2 - 1/4)/r^2 + V) u = 0 with
// nu = ell + 1.  Shooting integrates w = u / r^{nu+1/2}, which is regular at
// the origin (w'' + (2 nu + 1) w'/r = V w, w(0) = 1).

#include <boost/math/tools/toms748_solve.hpp>
#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lowdisp {

enum class Family { square_well, gaussian, two_well, sampled };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::square_well: return "square_well";
    case Family::gaussian: return "gaussian";
    case Family::two_well: return "two_well";
    case Family::sampled: return "sampled";
  }
  return "?";
}

struct PotentialError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BracketError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PotentialSpec {
  Family family = Family::square_well;
  double c = 1;         // square_well, gaussian: depth; two_well: inner depth
  double c2 = 0;        // two_well: shell depth
  double radius = 1;    // square_well radius; two_well inner radius
  double radius2 = 2;   // two_well outer radius
  double width = 1;     // gaussian: V = -c exp(-r^2/width^2)
  std::vector<double> table_r, table_v;  // sampled: linear interpolation, V = 0 beyond
  double decay_class = std::numeric_limits<double>::infinity();

  static PotentialSpec square_well(double c, double radius = 1) {
    PotentialSpec p;
    p.family = Family::square_well;
    p.c = c;
    p.radius = radius;
    return p;
  }
  static PotentialSpec gaussian(double c, double width = 1) {
    PotentialSpec p;
    p.family = Family::gaussian;
    p.c = c;
    p.width = width;
    return p;
  }
  static PotentialSpec two_well(double c1, double c2, double a, double b) {
    PotentialSpec p;
    p.family = Family::two_well;
    p.c = c1;
    p.c2 = c2;
    p.radius = a;
    p.radius2 = b;
    return p;
  }
  static PotentialSpec sampled(std::vector<double> r, std::vector<double> v, double decay_class) {
    if (r.size() < 2 || r.size() != v.size()) throw PotentialError("sampled potential needs matching columns");
    for (size_t i = 1; i < r.size(); ++i)
      if (!(r[i] > r[i - 1])) throw PotentialError("sampled potential radii must increase");
    PotentialSpec p;
    p.family = Family::sampled;
    p.table_r = std::move(r);
    p.table_v = std::move(v);
    p.decay_class = decay_class;
    return p;
  }

  double operator()(double r) const {
    switch (family) {
      case Family::square_well:
        return r < radius ? -c : 0.0;
      case Family::gaussian:
        return -c * std::exp(-r * r / (width * width));
      case Family::two_well:
        return r < radius ? -c : (r < radius2 ? -c2 : 0.0);
      case Family::sampled: {
        if (r >= table_r.back()) return 0.0;
        if (r <= table_r.front()) return table_v.front();
        auto it = std::upper_bound(table_r.begin(), table_r.end(), r);
        size_t i = static_cast<size_t>(it - table_r.begin());
        double t = (r - table_r[i - 1]) / (table_r[i] - table_r[i - 1]);
        return (1 - t) * table_v[i - 1] + t * table_v[i];
      }
    }
    return 0;
  }

  // Radius beyond which V vanishes (gaussian: |V| < 1e-30 c).
  double support() const {
    switch (family) {
      case Family::square_well: return radius;
      case Family::gaussian: return width * std::sqrt(30 * std::log(10.0));
      case Family::two_well: return radius2;
      case Family::sampled: return table_r.back();
    }
    return 0;
  }

  // Radii inside the support where V or a derivative jumps.
  std::vector<double> breaks() const {
    switch (family) {
      case Family::two_well: return {radius};
      case Family::sampled: return {table_r.begin() + 1, table_r.end() - 1};
      default: return {};
    }
  }

  bool empty() const {
    switch (family) {
      case Family::square_well:
      case Family::gaussian: return c == 0;
      case Family::two_well: return c == 0 && c2 == 0;
      case Family::sampled:
        return std::all_of(table_v.begin(), table_v.end(), [](double x) { return x == 0; });
    }
    return true;
  }

  double sign(double r) const { return (*this)(r) < 0 ? -1.0 : 1.0; }  // U
  double v(double r) const { return std::sqrt(std::abs((*this)(r))); }
};

// Two-column text table (r, V(r)); '#' starts a comment.
inline PotentialSpec read_potential_table(const std::string& path, double decay_class) {
  std::ifstream in(path);
  if (!in) throw PotentialError("cannot open potential table " + path);
  std::vector<double> r, v;
  std::string line;
  while (std::getline(in, line)) {
    auto h = line.find('#');
    if (h != std::string::npos) line.erase(h);
    std::istringstream is(line);
    double a, b;
    if (is >> a >> b) {
      r.push_back(a);
      v.push_back(b);
    }
  }
  return PotentialSpec::sampled(std::move(r), std::move(v), decay_class);
}

struct ShootState {
  double w = 1, wp = 0;  // w and dw/dr at the matching radius
  int nodes = 0;         // zeros of u in (0, matching radius)
  bool renormalised = false;
};

namespace detail {

// Integrate w'' = V w - (2 nu + 1) w'/r on [r0, a] segment by segment.
inline ShootState shoot(int ell, const PotentialSpec& V, double a, double tol = 1e-13) {
  namespace ode = boost::numeric::odeint;
  using state = std::array<double, 2>;
  double nu = ell + 1;
  std::vector<double> cuts;
  for (double b : V.breaks())
    if (b < a) cuts.push_back(b);
  if (V.support() < a) cuts.push_back(V.support());
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(a);
  double r0 = 1e-8 * a;
  double V0 = V(r0);
  state x{1 + V0 * r0 * r0 / (4 * (nu + 1)), V0 * r0 / (2 * (nu + 1))};
  ShootState out;
  double scale_log = 0;
  auto rhs = [&](const state& y, state& dy, double r) {
    dy[0] = y[1];
    dy[1] = V(r) * y[0] - (2 * nu + 1) * y[1] / r;
  };
  double prev = x[0];
  auto observe = [&](const state& y, double) {
    if ((y[0] < 0) != (prev < 0)) ++out.nodes;
    prev = y[0];
  };
  auto stepper = ode::make_controlled(tol, tol, ode::runge_kutta_dopri5<state>());
  double r = r0;
  for (double b : cuts) {
    if (b <= r) continue;
    ode::integrate_adaptive(stepper, rhs, x, r, b, (b - r) * 1e-3, observe);
    r = b;
    double m = std::max(std::abs(x[0]), std::abs(x[1]) * r);
    if (!std::isfinite(m)) throw PotentialError("shoot_defect: integration blew up");
    if (m > 1e100) {
      x[0] /= m;
      x[1] /= m;
      scale_log += std::log(m);
      out.renormalised = true;
    }
  }
  out.w = x[0];
  out.wp = x[1];
  return out;
}

}  // namespace detail

// Normalised log-derivative mismatch at the matching radius a:
//   sin(theta_u - theta_d),  theta = atan2(a f', f),  f = u or the decaying r^{1/2-nu}.
// Continuous in the coupling (no poles at zeros of u) and zero exactly at thresholds.
inline double shoot_defect(int ell, const PotentialSpec& V, double matching_radius) {
  if (matching_radius < V.support() * (1 - 1e-12))
    throw PotentialError("shoot_defect: potential extends past the matching radius");
  double nu = ell + 1, a = matching_radius;
  ShootState s;
  try {
    s = detail::shoot(ell, V, a);
  } catch (const PotentialError&) {
    // retry with a looser tolerance before giving up
    s = detail::shoot(ell, V, a, 1e-10);
  }
  // u = r^{nu+1/2} w, a u' = r^{nu+1/2} ((nu+1/2) w + a w'); the common factor cancels
  double fu = s.w, gu = (nu + 0.5) * s.w + a * s.wp;
  double fd = 1, gd = 0.5 - nu;
  return (fu * gd - gu * fd) / (std::hypot(fu, gu) * std::hypot(fd, gd));
}

inline int count_nodes(int ell, const PotentialSpec& V, double matching_radius) {
  return detail::shoot(ell, V, matching_radius).nodes;
}

struct TuneResult {
  double coupling = 0;
  double defect = 0;
  int iterations = 0;
};

// Root of shoot_defect in a coupling parameter set by `apply(spec, c)`.
template <class Apply>
TuneResult tune_threshold(int ell, PotentialSpec base, Apply&& apply, double lo, double hi, double matching_radius = 0) {
  auto spec_at = [&](double c) {
    PotentialSpec s = base;
    apply(s, c);
    return s;
  };
  auto f = [&](double c) {
    PotentialSpec s = spec_at(c);
    double a = matching_radius > 0 ? matching_radius : s.support();
    return shoot_defect(ell, s, a);
  };
  double flo = f(lo), fhi = f(hi);
  if (flo == 0) return {lo, 0, 0};
  if (fhi == 0) return {hi, 0, 0};
  if ((flo < 0) == (fhi < 0)) {
    std::ostringstream os;
    os << "tune_threshold: no sign change of the channel " << ell << " defect on [" << lo << ", " << hi << "]";
    throw BracketError(os.str());
  }
  std::uintmax_t iters = 200;
  auto tol = [](double a, double b) { return std::abs(a - b) <= 4 * std::numeric_limits<double>::epsilon() * std::abs(a); };
  auto res = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  double c = 0.5 * (res.first + res.second);
  // keep the endpoint with the smaller defect
  double d = f(c);
  for (double e : {res.first, res.second}) {
    double de = f(e);
    if (std::abs(de) < std::abs(d)) {
      c = e;
      d = de;
    }
  }
  return {c, d, static_cast<int>(iters)};
}

inline TuneResult tune_threshold(int ell, const PotentialSpec& base, double lo, double hi, double matching_radius = 0) {
  return tune_threshold(ell, base, [](PotentialSpec& s, double c) { s.c = c; }, lo, hi, matching_radius);
}

// Two-well family: find (c1, c2) with channels ell_a and ell_b both at threshold.
// For each core depth c1 the shell depth c2(c1) putting channel ell_b at
// threshold is tuned inside `c2_bracket`; then c1 is tuned inside
// `c1_bracket` until channel ell_a is at threshold too.  A small deep core
// moves ell = 0 thresholds much faster than ell = 1 ones, which is what
// makes the two threshold curves cross.
struct TwoWellResult {
  double c1 = 0, c2 = 0;
  double defect_a = 0, defect_b = 0;
};

inline TwoWellResult tune_two_well(const PotentialSpec& base, int ell_a, int ell_b, std::array<double, 2> c1_bracket,
                                   std::array<double, 2> c2_bracket) {
  if (base.family != Family::two_well) throw PotentialError("tune_two_well needs the two_well family");
  auto set_c2 = [](PotentialSpec& s, double c) { s.c2 = c; };
  auto c2_of = [&](double c1) {
    PotentialSpec s = base;
    s.c = c1;
    return tune_threshold(ell_b, s, set_c2, c2_bracket[0], c2_bracket[1]).coupling;
  };
  auto g = [&](double c1) {
    PotentialSpec s = base;
    s.c = c1;
    s.c2 = c2_of(c1);
    return shoot_defect(ell_a, s, s.support());
  };
  double glo = g(c1_bracket[0]), ghi = g(c1_bracket[1]);
  if ((glo < 0) == (ghi < 0)) throw BracketError("tune_two_well: no sign change on the c1 bracket");
  std::uintmax_t iters = 200;
  auto tol = [](double a, double b) { return std::abs(a - b) <= 8 * std::numeric_limits<double>::epsilon() * std::abs(a); };
  auto res = boost::math::tools::toms748_solve(g, c1_bracket[0], c1_bracket[1], glo, ghi, tol, iters);
  TwoWellResult out;
  out.c1 = 0.5 * (res.first + res.second);
  out.c2 = c2_of(out.c1);
  PotentialSpec s = base;
  s.c = out.c1;
  s.c2 = out.c2;
  out.defect_a = shoot_defect(ell_a, s, s.support());
  out.defect_b = shoot_defect(ell_b, s, s.support());
  return out;
}

// Reference two-well geometry: core radius 0.2, shell out to 1.
inline PotentialSpec reference_two_well() { return PotentialSpec::two_well(145, 14.6, 0.2, 1.0); }

}  // namespace lowdisp
