// Acceptance run: one PASS/FAIL line per criterion, with the measured numbers.
// Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <lowdisp/decayfit.hpp>
#include <lowdisp/evolution.hpp>
#include <lowdisp/kernels.hpp>
#include <lowdisp/oscint.hpp>
#include <lowdisp/potentials.hpp>
#include <lowdisp/spectral.hpp>

using namespace lowdisp;

namespace {

const double kFirst = 5.783185963, kSecond1 = 14.68197064, kSecond2 = 26.37461643;

struct Line {
  bool pass = true;
  std::string detail;
  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    detail += (detail.empty() ? "" : "; ") + what + (ok ? "" : " [FAIL]");
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}
std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

double slope(const std::vector<double>& t, const std::vector<double>& a) {
  std::vector<double> x, y;
  for (size_t i = 0; i < t.size(); ++i) {
    x.push_back(std::log(t[i]));
    y.push_back(std::log(a[i]));
  }
  return detail::linear_fit(x, y)[1];
}

std::unique_ptr<SpectralModel> square_well(double c) {
  SpectralConfig cfg;
  cfg.potential = PotentialSpec::square_well(c, 1.0);
  return std::make_unique<SpectralModel>(cfg);
}

const SpectralModel& first_kind() {
  static auto m = square_well(kFirst);
  return *m;
}

// |K(t)| for pair 0 through the integrator, requiring accepted rows.
struct Series {
  std::vector<double> t, a;
  bool all_accepted = true;
};

Series series(const SpectralModel* m, const std::vector<RadialPair>& pairs, Multiplier mu, const std::vector<double>& ts,
              int born = -1, size_t q = 0) {
  DensityEngine eng(m, pairs, 2);
  StoneIntegrator S(eng, mu, 0.25, {}, born);
  Series s;
  for (double t : ts) {
    auto v = S.evaluate(t, q);
    s.t.push_back(t);
    s.a.push_back(std::abs(v.value));
    s.all_accepted = s.all_accepted && v.err <= 1e-3 * std::abs(v.value);
  }
  return s;
}

double flatness(const Series& s, const std::function<double(double)>& comp) {
  double lo = 1e300, hi = 0;
  for (size_t i = 0; i < s.t.size(); ++i) {
    double c = s.a[i] * comp(s.t[i]);
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  return hi / lo - 1;
}

Line c1() {
  Line L;
  PropagatorRequest req;
  req.times = detail::logspace(1e3, 1e7, 13);
  req.pairs = {{0.5, 0.7, 1.0}, {1.5, 2.0, 0.3}, {0.2, 3.0, -0.5}};
  auto ts = stone_evolve(req, nullptr);
  double worst = 0;
  size_t accepted = 0;
  for (const auto& r : ts.rows) {
    accepted += r.accepted;
    worst = std::max(worst, std::abs(std::abs(r.value) * 16 * M_PI * M_PI * r.t * r.t - 1));
  }
  L.check(accepted == ts.rows.size(), "all rows accepted");
  L.check(worst <= 0.02, fmt("max | |K| 16 pi^2 t^2 - 1 | = %.2e", worst));
  auto f = fit(ts, 0, req.pairs[0], {{Rate::t_m2}});
  L.check(std::abs(f.coefficient(Rate::t_m2) * 16 * M_PI * M_PI - 1) <= 0.02,
          fmt("fitted t^-2 coefficient x 16 pi^2 = %.5f", f.coefficient(Rate::t_m2) * 16 * M_PI * M_PI));
  return L;
}

Line rate_line(double c, Classification want, double target, double tol, bool need_m1, bool need_zero) {
  Line L;
  auto m = square_well(c);
  const auto& d = m->classify();
  L.check(d.kind == want, std::string("classified ") + classification_name(d.kind));
  if (need_m1 || need_zero) {
    double m0 = 0, m1 = 0;
    for (const auto& mo : d.moments) {
      m0 = std::max(m0, std::abs(mo.m0));
      m1 = std::max(m1, std::abs(mo.m1));
    }
    if (need_m1) L.check(m1 > 1e-8, fmt("|m1| = %.3e", m1));
    if (need_zero) L.check(m0 <= 1e-8 && m1 <= 1e-8, fmt("|m0| = %.1e, |m1| = %.1e", m0, m1));
  }
  PropagatorRequest req;
  req.times = detail::logspace(1e3, 1e7, 13);
  req.pairs = {{0.5, 0.7, 1.0}};
  auto ts = stone_evolve(req, m.get());
  auto f = fit(ts, 0, req.pairs[0], {{Rate::t_m2, Rate::inv_t}});
  L.check(ts.rows.size() == 13 && std::all_of(ts.rows.begin(), ts.rows.end(), [](auto& r) { return r.accepted; }),
          "all rows accepted");
  L.check(std::abs(f.slope - target) <= tol, fmt("slope %.4f", f.slope));
  return L;
}

Line c3() {
  Line L;
  const auto& m = first_kind();
  L.check(m.classify().kind == Classification::FirstKind,
          std::string("classified ") + classification_name(m.classify().kind));
  auto ts = detail::logspace(1e4, 1e10, 13);
  auto s = series(&m, {{0.5, 0.7, 1.0}}, Multiplier{}, ts);
  L.check(s.all_accepted, "all rows accepted");
  double fl = flatness(s, [](double t) { return std::log(t); });
  L.check(fl <= 0.25, fmt("|K| log t varies by %.1f%%", 100 * fl));

  // pair grid: the leading term is phi(t) psi(x) psi(y)
  std::vector<double> radii{0.3, 0.7, 1.5, 3.0};
  std::vector<RadialPair> pairs;
  for (double a : radii)
    for (double b : radii) pairs.push_back({a, b, 0.5});
  Eigen::VectorXd u = m.zero_energy_solution(m.classify().Gamma[0], radii);
  Eigen::VectorXd psi(4);
  for (int i = 0; i < 4; ++i) psi(i) = u(i) / std::pow(radii[i], 1.5);
  Eigen::MatrixXd P = psi * psi.transpose();
  DensityEngine eng(&m, pairs, 2);
  StoneIntegrator S(eng, Multiplier{}, 0.25);
  std::vector<double> remt;
  Eigen::MatrixXd last;
  for (double t : ts) {
    Eigen::MatrixXcd K(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) K(i, j) = S.evaluate(t, 4 * i + j).value;
    cplx phi = (K.array() * P.cast<cplx>().array()).sum() / P.squaredNorm();
    remt.push_back((K - phi * P.cast<cplx>()).norm() / P.norm() * t);
    last = (K * std::polar(1.0, -std::arg(phi))).real();
  }
  double top = std::max({remt[remt.size() - 1], remt[remt.size() - 2], remt[remt.size() - 3]});
  double bot = std::min({remt[remt.size() - 1], remt[remt.size() - 2], remt[remt.size() - 3]});
  L.check(remt.back() <= remt.front() && top / bot <= 3,
          fmt("remainder x t: %.2e at 1e4, %.2e at 1e10", remt.front(), remt.back()));
  auto r1 = rank_one(last);
  double mis = shape_mismatch(r1.u, psi);
  L.check(r1.ratio <= 0.05 && mis <= 0.05, fmt("rank one at t = 1e10: s2/s1 = %.1e, shape vs psi %.1e", r1.ratio, mis));
  return L;
}

Line c6() {
  Line L;
  auto tw = tune_two_well(reference_two_well(), 0, 1, {140, 150}, {0, 40});
  SpectralConfig cfg;
  cfg.potential = PotentialSpec::two_well(tw.c1, tw.c2, 0.2, 1.0);
  SpectralModel m(cfg);
  L.check(m.classify().kind == Classification::ThirdKind,
          fmt("(c1*, c2*) = (%.9f, %.9f)", tw.c1, tw.c2) + " classified " + classification_name(m.classify().kind));
  // the resonance is the second l = 0 threshold, so psi has a node near r = 0.55; the pair
  // sits outside the support where psi ~ a/r^2
  PropagatorRequest req;
  req.times = detail::logspace(1e4, 1e10, 13);
  req.pairs = {{1.5, 2.0, 0.3}};
  auto ts = stone_evolve(req, &m);
  auto model = expected_model(m.classify().kind, Multiplier{}, orthogonality_flags(m.classify()));
  auto f = fit(ts, 0, req.pairs[0], model);
  double c = f.coefficient(Rate::inv_log);
  L.check(c != 0 && f.dominant == Rate::inv_log,
          fmt("1/log t coefficient %.4e, residual %.1e", c, f.residual) + ", dominant " + rate_name(f.dominant));
  return L;
}

Line c7() {
  Line L;
  auto reg = square_well(1.0);
  for (const auto& row : reg->expansion_report("Mexp"))
    L.check(row.exponent >= row.required, row.name + fmt(" exponent %.2f (need %.1f)", row.exponent, row.required));
  for (const auto& row : first_kind().expansion_report("first"))
    L.check(row.r2 >= 0.999, row.name + fmt(" R^2 = %.6f", row.r2));
  // lambda^2 M^{-1} -> -D_2 at lambda = 1e-4, literal sign; the +D_2 error is printed beside it
  auto s2 = square_well(kSecond1);
  double lam = 1e-4, num_minus = 0, num_plus = 0, den = 0;
  for (int ell = 0; ell <= s2->max_ell(); ++ell) {
    Eigen::MatrixXcd D = s2->D2_matrix(ell).cast<cplx>();
    if (D.norm() == 0) continue;
    Eigen::MatrixXcd X = lam * lam * s2->invert_M({lam, +1}, ell).matrix;
    num_minus += (X + D).squaredNorm();
    num_plus += (X - D).squaredNorm();
    den += D.squaredNorm();
  }
  double em = std::sqrt(num_minus / den), ep = std::sqrt(num_plus / den);
  L.check(em <= 1e-2, fmt("|l^2 M^-1 + D2|/|D2| = %.2e (against +D2: %.1e)", em, ep));
  auto s22 = square_well(kSecond2);
  for (const auto& row : s22->expansion_report("cancel"))
    if (row.name == "cancel.ell2") L.check(row.value <= 1e-8, fmt("P_e V x block %.1e", row.value));
  return L;
}

Line c8() {
  Line L;
  std::vector<RadialPair> pairs{{0.5, 0.7, 1.0}, {1.5, 2.0, 0.3}};
  auto reg = square_well(1.0);
  for (const SpectralModel* m : std::vector<const SpectralModel*>{reg.get(), &first_kind()}) {
    DensityEngine eng(m, pairs, 2);
    StoneIntegrator S(eng, Multiplier{}, 0.25);
    EigOracle O(&m->config().potential, pairs, OracleConfig{});
    double worst = 0;
    for (double t : {1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0}) {
      auto o = O.evaluate(t, Multiplier{});
      for (size_t q = 0; q < pairs.size(); ++q) {
        auto s = S.evaluate(t, q);
        worst = std::max(worst, std::abs(s.value - o[q]) / std::abs(s.value));
      }
    }
    L.check(worst <= 1e-2,
            std::string(classification_name(m->classify().kind)) + fmt(" max rel err %.1e", worst));
  }
  return L;
}

Line c9() {
  Line L;
  auto kgsin = Multiplier::make(MultiplierKind::KGsin, 1.0), kgcos = Multiplier::make(MultiplierKind::KGcos, 1.0);
  std::vector<RadialPair> pair{{0.5, 0.7, 1.0}};
  auto fr = series(nullptr, pair, kgsin, detail::logspace(1e3, 1e7, 13), 0);
  double s0 = slope(fr.t, fr.a);
  L.check(fr.all_accepted && std::abs(s0 + 1.5) <= 0.05, fmt("free KG sine Born term slope %.3f (target -1.5)", s0));

  const auto& m = first_kind();
  auto ts = detail::logspace(1e4, 1e10, 13);
  for (auto mu : {kgsin, kgcos}) {
    auto s = series(&m, pair, mu, ts);
    double fl = flatness(s, [](double t) { return std::log(t); });
    L.check(s.all_accepted && fl <= 0.25, mu.name() + fmt(" FirstKind |K| log t varies by %.1f%%", 100 * fl));
  }
  // above 1e7 the wave tail estimate exceeds the row tolerance
  auto tw = detail::logspace(1e3, 1e7, 13);
  auto w = series(&m, pair, Multiplier::make(MultiplierKind::WaveSin), tw);
  auto k = series(&m, pair, kgsin, tw);
  double sw = slope(w.t, w.a), sk = slope(k.t, k.a);
  L.check(w.all_accepted && k.all_accepted && std::abs(sw - sk - 1) <= 0.1,
          fmt("FirstKind wave sine slope %.3f, KG sine slope %.3f", sw, sk) + fmt(", difference %.3f", sw - sk));
  return L;
}

Line c10() {
  Line L;
  auto rs = verify_all();
  rs.push_back(verify_spatial());
  int bad = 0;
  for (const auto& r : rs)
    if (!r.pass) {
      ++bad;
      L.check(false, r.id + (r.control ? fmt(" control growth %.3f per decade", r.growth)
                                       : fmt(" drift %.3f", r.drift)));
    }
  L.check(bad == 0, std::to_string(rs.size() - bad) + "/" + std::to_string(rs.size()) + " cases pass");
  double worst = 0;
  for (double lam : {1e-3, 1e-2, 0.1, 0.5})
    for (double d : {0.1, 1.0, 5.0}) {
      double ref = std::abs(free_kernel_2d({lam, +1}, d)) / (2 * M_PI);
      worst = std::max(worst, dimension_reduction_check({lam, +1}, d) / ref);
    }
  L.check(worst <= 1e-6, fmt("dimension reduction residual %.1e (relative)", worst));
  SpatialParams p;
  double q = spatial_quadrature(p);
  auto mc = spatial_monte_carlo(p, 10000000);
  double rel = std::abs(q - mc.mean) / q;
  L.check(rel <= 0.05, fmt("spatial integral %.5f vs Monte-Carlo %.5f", q, mc.mean) + fmt(" (rel %.1e)", rel));
  return L;
}

Line c11() {
  Line L;
  auto tw = tune_two_well(reference_two_well(), 0, 1, {140, 150}, {0, 40});
  SpectralConfig cfg;
  cfg.potential = PotentialSpec::two_well(tw.c1, tw.c2, 0.2, 1.0);
  SpectralModel third(cfg);
  auto s1 = square_well(kSecond1), s2 = square_well(kSecond2);
  double sd = 0, ps = 0, sg = 0, conj = 0;
  bool rank = true;
  for (const SpectralModel* m : std::vector<const SpectralModel*>{&first_kind(), s1.get(), s2.get(), &third}) {
    const auto& d = m->classify();
    rank = rank && d.rank_S1() <= d.rank_S2() + 1;
    for (int ell = 0; ell <= m->max_ell(); ++ell) {
      Eigen::MatrixXcd S = m->S1_matrix(ell).cast<cplx>();
      sd = std::max(sd, (S * d.D0[ell].matrix - S).norm());
      if (ell == 0) ps = std::max(ps, (m->P().matrix.real() * m->S2_matrix(0)).norm());
      Eigen::MatrixXd TU = d.T[ell].matrix.real();
      for (int i = 0; i < m->grid().N; ++i) TU.col(i) *= m->U(m->grid().nodes[i]);
      for (const auto& k : d.S1)
        if (k.ell == ell) sg = std::max(sg, (TU.transpose() * k.phi).norm());
      for (double lam : {1e-3, 0.1}) {
        auto Mp = m->assemble_M({lam, +1}, ell).matrix, Mm = m->assemble_M({lam, -1}, ell).matrix;
        auto Ip = m->invert_M({lam, +1}, ell).matrix, Im = m->invert_M({lam, -1}, ell).matrix;
        conj = std::max(conj, (Mm - Mp.conjugate()).norm() / Mp.norm());
        conj = std::max(conj, (Im - Ip.conjugate()).norm() / Ip.norm());
      }
    }
  }
  L.check(third.classify().kind == Classification::ThirdKind, "two-well ThirdKind");
  L.check(sd <= 1e-8, fmt("|S1 D0 - S1| = %.1e", sd));
  L.check(ps <= 1e-8, fmt("|P S2| = %.1e", ps));
  L.check(sg <= 1e-6, fmt("|S1 + S1 v G0 w| = %.1e", sg));
  L.check(rank, "rank S1 <= rank S2 + 1");
  L.check(conj <= 1e-10, fmt("conjugacy of M and M^-1: %.1e", conj));
  return L;
}

}  // namespace

int main() {
  struct Item {
    int id;
    double budget;  // seconds
    std::function<Line()> run;
  };
  std::vector<Item> items{
      {1, 60, c1},
      {2, 600, [] { return rate_line(1.0, Classification::Regular, -2, 0.05, false, false); }},
      {3, 1800, c3},
      {4, 900, [] { return rate_line(kSecond1, Classification::SecondKind, -1, 0.05, true, false); }},
      {5, 900, [] { return rate_line(kSecond2, Classification::SecondKind, -2, 0.1, false, true); }},
      {6, 1800, c6},
      {7, 600, c7},
      {8, 600, c8},
      {9, 1200, c9},
      {10, 600, c10},
      {11, 600, c11},
  };
  int failed = 0;
  for (const auto& it : items) {
    auto t0 = std::chrono::steady_clock::now();
    Line L;
    try {
      L = it.run();
    } catch (const std::exception& e) {
      L.check(false, std::string("exception: ") + e.what());
    }
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    L.check(sec <= it.budget, fmt("runtime %.1fs (budget %.0fs)", sec, it.budget));
    failed += !L.pass;
    std::printf("criterion %2d: %s  %s\n", it.id, L.pass ? "PASS" : "FAIL", L.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria pass\n", static_cast<int>(items.size()) - failed, items.size());
  return failed ? 1 : 0;
}
