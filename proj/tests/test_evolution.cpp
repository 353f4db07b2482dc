#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <sstream>

#include <lowdisp/evolution.hpp>

using namespace lowdisp;

namespace {

double fitted_slope(const std::vector<double>& t, const std::vector<double>& a) {
  std::vector<double> x, y;
  for (size_t i = 0; i < t.size(); ++i) {
    x.push_back(std::log(t[i]));
    y.push_back(std::log(a[i]));
  }
  return detail::linear_fit(x, y)[1];
}

const SpectralModel& regular_model() {
  static SpectralModel m([] {
    SpectralConfig c;
    c.potential = PotentialSpec::square_well(1.0);
    return c;
  }());
  return m;
}

}  // namespace

TEST_CASE("multipliers") {
  CHECK_THROWS_AS(Multiplier::make(MultiplierKind::KGcos, 0.0), ConfigError);
  CHECK_THROWS_AS(Multiplier::make(MultiplierKind::KGsin, -1.0), ConfigError);
  CHECK(Multiplier::make(MultiplierKind::WaveSin, 3.0).mass == 0);
  CHECK_THROWS_AS(Multiplier::parse("heat"), ConfigError);
  auto kg = Multiplier::parse("kgsin", 2.0);
  CHECK(kg.name() == "kgsin");
  CHECK(std::abs(kg(3.0, 5.0) - std::sin(9.0) / 3.0) < 1e-15);
  CHECK(std::abs(Multiplier::make(MultiplierKind::WaveSin)(7.0, 0.0) - 7.0) < 1e-15);
  CHECK(std::abs(Multiplier::make(MultiplierKind::Schrod)(2.0, 0.5) - std::polar(1.0, 1.0)) < 1e-15);
}

TEST_CASE("free closed form and panel moment") {
  RadialPair p{0.4, 1.1, 0.2};
  CHECK(std::abs(free_schrodinger_kernel(10, p)) == doctest::Approx(6.3326e-5).epsilon(1e-4));
  for (double t : {0.3, 10.0, 1e3, 1e8}) {
    cplx exact = (std::polar(1.0, t) - 1.0) / cplx(0, t);
    CHECK(std::abs(filon_panel({1.0}, 0.0, 1.0, t) - exact) < 1e-12);
  }
}

TEST_CASE("free density: Gegenbauer resummation and conjugate symmetry") {
  RadialPair p{0.5, 0.8, 0.4};
  double d = std::sqrt(0.25 + 0.64 - 2 * 0.5 * 0.8 * 0.4);
  DensityEngine eng(nullptr, {p}, 7);
  for (double lam : {0.01, 0.05, 0.3, 0.5}) {
    cplx J = eng.jump(lam)[0];
    // [R_0^+ - R_0^-](x, y) = i lambda J_1(lambda d) / (4 pi d)
    double exact = lam * bessel<double>(BesselKind::J, 1, lam * d) / (4 * M_PI * d);
    CHECK(std::abs(J.imag() - exact) <= 1e-10 * exact);
    CHECK(std::abs(J.real()) <= 1e-10 * std::abs(J));
  }
}

TEST_CASE("free Schrodinger kernel follows 1/(16 pi^2 t^2)") {
  PropagatorRequest req;
  req.times = {1e3, 1e4, 1e5, 1e6, 1e7};
  req.pairs = {{0.5, 0.7, 1.0}, {0.7, 0.5, 1.0}, {1.5, 2.0, 0.3}};
  req.channels = 2;
  auto ts = stone_evolve(req, nullptr);
  CHECK(ts.classification == "free");
  for (const auto& r : ts.rows) {
    CHECK(r.accepted);
    CHECK(std::abs(r.value) * 16 * M_PI * M_PI * r.t * r.t == doctest::Approx(1.0).epsilon(0.02));
  }
  // symmetry K(x, y) = K(y, x)
  for (size_t i = 0; i < ts.rows.size(); i += 3)
    CHECK(std::abs(ts.rows[i].value - ts.rows[i + 1].value) <= 1e-8 * std::abs(ts.rows[i].value));
}

TEST_CASE("quadrature cost does not grow with t") {
  DensityEngine eng(nullptr, {{0.5, 0.7, 1.0}}, 2);
  StoneIntegrator S(eng, Multiplier{}, 0.25);
  auto time_at = [&](double t) {
    double best = 1e9;
    for (int rep = 0; rep < 5; ++rep) {
      auto a = std::chrono::steady_clock::now();
      cplx s = 0;
      for (int i = 0; i < 200; ++i) s += S.evaluate(t * (1 + 1e-3 * i), 0).value;
      auto b = std::chrono::steady_clock::now();
      best = std::min(best, std::chrono::duration<double>(b - a).count());
      CHECK(std::isfinite(s.real()));
    }
    return best;
  };
  double t3 = time_at(1e3), t10 = time_at(1e10);
  CHECK(t10 <= 2 * t3);
  CHECK(t3 <= 2 * t10);
}

TEST_CASE("request validation and CSV contract") {
  PropagatorRequest req;
  req.times = {2.0};
  req.pairs = {{0.5, 0.7, 1.0}};
  CHECK_THROWS_AS(stone_evolve(req, nullptr), ConfigError);
  req.times = {10.0};
  CHECK_THROWS_AS(born_term(4, req, nullptr), ConfigError);
  CHECK_THROWS_AS(born_term(1, req, nullptr), ConfigError);
  req.pairs = {{0.0, 0.7, 1.0}};
  CHECK_THROWS_AS(stone_evolve(req, nullptr), ConfigError);

  TimeSeries ts;
  ts.multiplier = "schrod";
  ts.classification = "Regular";
  ts.rows.push_back({10.0, 0, cplx(1, 2), 1e-9, true});
  ts.rows.push_back({20.0, 0, cplx(1, 2), 1.0, false});
  std::ostringstream os;
  ts.write_csv(os);
  std::istringstream is(os.str());
  std::string header, line;
  std::getline(is, header);
  CHECK(header == "t,pair_id,re,im,abs,err_est,multiplier,classification");
  int n = 0;
  while (std::getline(is, line)) ++n;
  CHECK(n == 1);
}

TEST_CASE("Regular well: identities, decay and oracle agreement") {
  const SpectralModel& m = regular_model();
  REQUIRE(m.classify().kind == Classification::Regular);
  std::vector<RadialPair> pairs{{0.5, 0.7, 1.0}, {0.7, 0.5, 1.0}, {1.5, 2.0, 0.3}};
  DensityEngine eng(&m, pairs, 2);

  SUBCASE("symmetric resolvent identity vs finite Born split") {
    for (int ell = 0; ell <= 2; ++ell) {
      auto two = eng.resolvent_two_ways(0.05, ell);
      for (size_t q = 0; q < pairs.size(); ++q)
        CHECK(std::abs(two[0][q] - two[1][q]) <= 1e-8 * std::abs(two[0][q]));
    }
  }
  SUBCASE("density is i times a real function") {
    for (double lam : {1e-6, 1e-3, 0.1, 0.4}) {
      auto J = eng.jump(lam);
      for (const auto& j : J) CHECK(std::abs(j.real()) <= 1e-10 * std::abs(j));
    }
  }
  SUBCASE("evolution") {
    StoneIntegrator S(eng, Multiplier{}, 0.25);
    std::vector<double> ts{1e3, 1e4, 1e5, 1e6, 1e7}, a;
    for (double t : ts) {
      auto v0 = S.evaluate(t, 0), v1 = S.evaluate(t, 1);
      CHECK(v0.err <= 1e-3 * std::abs(v0.value));
      CHECK(std::abs(v0.value - v1.value) <= 1e-8 * std::abs(v0.value));
      a.push_back(std::abs(v0.value));
    }
    CHECK(fitted_slope(ts, a) == doctest::Approx(-2).epsilon(0.025));

    // Born k = 0 is the free term; k = 1 is small and carries the same rate
    PropagatorRequest req;
    req.times = ts;
    req.pairs = {pairs[0]};
    req.channels = 2;
    auto b0 = born_term(0, req, &m);
    auto [t0, a0] = b0.abs_series(0);
    REQUIRE(t0.size() == ts.size());
    CHECK(fitted_slope(t0, a0) == doctest::Approx(-2).epsilon(0.025));

    OracleConfig oc;
    oc.R = 800;
    EigOracle O(&m.config().potential, pairs, oc);
    CHECK(O.bound_states() == 0);
    for (double t : {1.0, 10.0, 100.0, 200.0}) {
      auto o = O.evaluate(t, Multiplier{});
      for (size_t q = 0; q < pairs.size(); ++q) {
        auto s = S.evaluate(t, q);
        CHECK(std::abs(s.value - o[q]) <= 1e-2 * std::abs(s.value));
      }
    }
    CHECK_THROWS_AS(O.evaluate(201, Multiplier{}), StaleOracle);
  }
}

TEST_CASE("oracle: bound states are excluded by P_ac") {
  PotentialSpec V = PotentialSpec::square_well(10.0);  // one l = 0 bound state
  std::vector<RadialPair> pairs{{0.5, 0.5, 1.0}};
  OracleConfig oc;
  oc.R = 200;
  oc.channels = 0;
  EigOracle O(&V, pairs, oc);
  REQUIRE(O.bound_states() == 1);
  std::vector<double> diff;
  for (double t : {10.0, 20.0, 40.0}) {
    auto ac = O.evaluate(t, Multiplier{}), all = O.evaluate(t, Multiplier{}, true);
    diff.push_back(std::abs(all[0] - ac[0]));
  }
  CHECK(diff[0] > 1e-2);
  CHECK(diff[2] == doctest::Approx(diff[0]).epsilon(1e-10));
}

TEST_CASE("Klein-Gordon and wave multipliers, free") {
  PropagatorRequest req;
  req.times = {1e3, 1e4, 1e5, 1e6, 1e7};
  req.pairs = {{0.5, 0.7, 1.0}};
  req.channels = 1;
  // the threshold amplitude vanishes like (w - m): envelope ~ t^{-2}
  req.multiplier = Multiplier::make(MultiplierKind::KGsin, 1.0);
  auto kg = born_term(0, req, nullptr);
  auto [t1, a1] = kg.abs_series(0);
  REQUIRE(t1.size() == req.times.size());
  CHECK(fitted_slope(t1, a1) == doctest::Approx(-2).epsilon(0.025));
  // real part is the sin(t sqrt(H + m^2)) / sqrt(H + m^2) kernel itself
  DensityEngine eng(nullptr, req.pairs, 1);
  StoneIntegrator Kc(eng, Multiplier::make(MultiplierKind::KGcos, 1.0), 0.25);
  StoneIntegrator Ks(eng, Multiplier::make(MultiplierKind::KGsin, 1.0), 0.25);
  for (double t : {50.0, 5e3}) {
    // d/dt of the sine kernel is the cosine kernel
    double h = 1e-3;
    double ds = (Ks.evaluate(t + h, 0).value.real() - Ks.evaluate(t - h, 0).value.real()) / (2 * h);
    CHECK(ds == doctest::Approx(Kc.evaluate(t, 0).value.real()).epsilon(1e-5));
  }
  req.multiplier = Multiplier::make(MultiplierKind::WaveSin);
  req.times = {1e3, 1e4, 1e5};
  auto w = born_term(0, req, nullptr);
  auto [t2, a2] = w.abs_series(0);
  REQUIRE(t2.size() == req.times.size());
  CHECK(fitted_slope(t2, a2) == doctest::Approx(-3).epsilon(0.02));
}
