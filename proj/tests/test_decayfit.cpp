#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include <lowdisp/decayfit.hpp>

using namespace lowdisp;

namespace {

std::vector<double> tgrid(double a, double b, int n) { return detail::logspace(a, b, n); }

template <class F>
std::vector<double> sample(const std::vector<double>& t, F&& f) {
  std::vector<double> y;
  for (double s : t) y.push_back(f(s));
  return y;
}

}  // namespace

TEST_CASE("recovers 3/t + 5/(t log^2 t)") {
  auto t = tgrid(1e3, 1e9, 40);
  auto y = sample(t, [](double s) { return 3 / s + 5 / (s * std::log(s) * std::log(s)); });
  auto r = fit(t, y, {{Rate::inv_t, Rate::inv_tlog2}});
  CHECK(r.coefficient(Rate::inv_t) == doctest::Approx(3).epsilon(0.02));
  CHECK(r.coefficient(Rate::inv_tlog2) == doctest::Approx(5).epsilon(0.02));
  CHECK(r.residual < 1e-10);
  CHECK(r.dominant == Rate::inv_t);
  CHECK(r.to_json()["dominant"] == "1/t");
}

TEST_CASE("noisy t^-2") {
  std::mt19937 gen(7);
  std::normal_distribution<double> noise(0, 0.01);
  auto t = tgrid(1e3, 1e7, 30);
  auto y = sample(t, [&](double s) { return 2.5 / (s * s) * (1 + noise(gen)); });
  auto r = fit(t, y, {{Rate::t_m32, Rate::t_m2}});
  CHECK(r.dominant == Rate::t_m2);
  CHECK(r.slope == doctest::Approx(-2).epsilon(0.015));
}

TEST_CASE("constant series") {
  auto t = tgrid(1e3, 1e9, 20);
  auto y = sample(t, [](double) { return 0.7; });
  auto r = fit(t, y, {{Rate::one, Rate::inv_t}});
  CHECK(r.dominant == Rate::one);
  CHECK(std::abs(r.slope) < 1e-12);
}

TEST_CASE("preconditions") {
  auto t = tgrid(1e3, 1e9, 20);
  auto y = sample(t, [](double s) { return 1 / s; });
  CHECK_THROWS_AS(fit(t, y, {}), ConfigError);
  std::vector<double> t5(t.begin(), t.begin() + 5), y5(y.begin(), y.begin() + 5);
  CHECK_THROWS_AS(fit(t5, y5, {{Rate::inv_t}}), ConfigError);
  auto tn = tgrid(1e3, 1e5, 20);
  CHECK_THROWS_AS(fit(tn, sample(tn, [](double s) { return 1 / s; }), {{Rate::inv_t}}), ConfigError);
  auto t2 = tgrid(1.5, 1e5, 20);
  CHECK_THROWS_AS(fit(t2, sample(t2, [](double s) { return 1 / s; }), {{Rate::inv_t}}), ConfigError);
  // identical columns
  CHECK_THROWS_AS(fit(t, y, {{Rate::inv_t, Rate::inv_t}}), CollinearBasis);
}

TEST_CASE("verdicts stable under a one-decade shift") {
  auto f = [](double s) { return 0.2 / std::log(s) + 4 / s; };
  RateModel m{{Rate::inv_log, Rate::inv_t}};
  auto t1 = tgrid(1e3, 1e9, 30), t2 = tgrid(1e4, 1e10, 30);
  auto r1 = fit(t1, sample(t1, f), m), r2 = fit(t2, sample(t2, f), m);
  CHECK(r1.dominant == Rate::inv_log);
  CHECK(r2.dominant == r1.dominant);
  CHECK(r1.coefficient(Rate::inv_log) == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("spatial weights divide the pair series") {
  CHECK(spatial_weight(SpatialWeight::log_plus, 0.5) == 1.0);
  CHECK(spatial_weight(SpatialWeight::log_plus, std::exp(2.0)) == doctest::Approx(3.0));
  CHECK(spatial_weight(SpatialWeight::bracket_half, 0.0) == 1.0);
  TimeSeries ts;
  for (double t : tgrid(1e3, 1e7, 15)) ts.rows.push_back({t, 0, cplx(6 / (t * t), 0), 0, true});
  RadialPair p{std::exp(1.0), std::exp(2.0), 1};
  auto r = fit(ts, 0, p, {{Rate::t_m2}, SpatialWeight::log_plus});
  CHECK(r.coefficient(Rate::t_m2) == doctest::Approx(1.0));
}

TEST_CASE("expected models") {
  Multiplier schrod, kg = Multiplier::make(MultiplierKind::KGsin, 1);
  auto has = [](const RateModel& m, Rate r) { return std::find(m.basis.begin(), m.basis.end(), r) != m.basis.end(); };
  CHECK(expected_model(Classification::Regular, schrod).basis == std::vector<Rate>{Rate::t_m2});
  CHECK(has(expected_model(Classification::FirstKind, schrod), Rate::inv_log));
  CHECK(has(expected_model(Classification::ThirdKind, schrod), Rate::inv_log));
  CHECK(expected_model(Classification::SecondKind, schrod).basis == std::vector<Rate>{Rate::inv_t});
  CHECK(expected_model(Classification::SecondKind, schrod, {true, true}).basis == std::vector<Rate>{Rate::t_m2});
  CHECK(has(expected_model(Classification::Regular, kg), Rate::t_m32));
}

TEST_CASE("rank-one factorisation of a coefficient matrix") {
  Eigen::VectorXd u(4);
  u << 1.0, 0.7, 0.2, 0.05;
  Eigen::MatrixXd C = 0.3 * u * u.transpose();
  C(1, 2) += 1e-4;
  C(2, 1) += 1e-4;
  auto r = rank_one(C);
  CHECK(r.ratio < 1e-3);
  CHECK(shape_mismatch(r.u, u) < 1e-3);
  CHECK(r.scale * u.squaredNorm() == doctest::Approx(0.3 * u.squaredNorm() * u.squaredNorm()).epsilon(1e-3));
}
