#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/special_functions/bessel.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lowdisp/potentials.hpp"

using namespace lowdisp;

namespace {

// square well of radius 1: threshold in channel ell  <=>  J_{ell}(sqrt c) = 0
double bessel_threshold(int ell) {
  double j = boost::math::cyl_bessel_j_zero(static_cast<double>(ell), 1);
  return j * j;
}

}  // namespace

TEST_CASE("square-well thresholds match Bessel zeros") {
  CHECK(std::abs(bessel_threshold(0) - 5.783185963) < 1e-9);
  for (int ell = 0; ell <= 2; ++ell) {
    double c = bessel_threshold(ell);
    auto r = tune_threshold(ell, PotentialSpec::square_well(0, 1), c - 1.5, c + 1.5);
    CHECK(std::abs(r.coupling - c) < 1e-9);
    CHECK(std::abs(r.defect) < 1e-12);
  }
  CHECK(std::abs(bessel_threshold(1) - 14.68197064) < 1e-8);
  CHECK(std::abs(bessel_threshold(2) - 26.37461643) < 1e-8);
}

TEST_CASE("defect changes sign with nonzero slope at the ell = 0 threshold") {
  double c = bessel_threshold(0), h = 1e-4;
  double lo = shoot_defect(0, PotentialSpec::square_well(c - h), 1.0);
  double hi = shoot_defect(0, PotentialSpec::square_well(c + h), 1.0);
  CHECK((lo < 0) != (hi < 0));
  CHECK(std::abs(hi - lo) / (2 * h) > 1e-2);
  // matching further out gives the same root
  auto r = tune_threshold(0, PotentialSpec::square_well(0), 4.0, 8.0, 3.0);
  CHECK(std::abs(r.coupling - 5.783185963) < 1e-9);
}

TEST_CASE("reference bracket and bracket without a threshold") {
  auto r = tune_threshold(0, PotentialSpec::square_well(0), 4.0, 8.0);
  CHECK(std::abs(r.coupling - 5.783185963) < 1e-9);
  CHECK_THROWS_AS(tune_threshold(0, PotentialSpec::square_well(0), 0.1, 0.2), BracketError);
}

TEST_CASE("node count follows the threshold index") {
  double c0 = bessel_threshold(0);
  double c1 = std::pow(boost::math::cyl_bessel_j_zero(0.0, 2), 2);
  CHECK(count_nodes(0, PotentialSpec::square_well(0.5 * c0), 1.0) == 0);
  CHECK(count_nodes(0, PotentialSpec::square_well(0.5 * (c0 + c1)), 1.0) == 1);
  auto r = tune_threshold(0, PotentialSpec::square_well(0), c1 - 2, c1 + 2);
  CHECK(std::abs(r.coupling - c1) < 1e-8);
}

TEST_CASE("sampled table reproduces the square well") {
  auto path = std::filesystem::temp_directory_path() / "lowdisp_table.txt";
  {
    std::ofstream out(path);
    out << "# r V\n";
    // step approximated by a steep linear ramp on [1, 1 + 1e-9]
    out << "0 -5\n1 -5\n1.000000001 0\n";
  }
  auto V = read_potential_table(path.string(), std::numeric_limits<double>::infinity());
  std::filesystem::remove(path);
  CHECK(V.family == Family::sampled);
  CHECK(V(0.5) == -5);
  CHECK(V(2.0) == 0);
  CHECK(V.breaks().size() == 1);
  // scale the table to find the threshold
  auto r = tune_threshold(
      0, V,
      [](PotentialSpec& s, double c) {
        s.table_v[0] = s.table_v[1] = -c;
      },
      4.0, 8.0);
  CHECK(std::abs(r.coupling - 5.783185963) < 1e-6);
  CHECK_THROWS_AS(PotentialSpec::sampled({0, 1}, {1}, 2), PotentialError);
  CHECK_THROWS_AS(read_potential_table("/nonexistent/table", 2), PotentialError);
}

TEST_CASE("gaussian thresholds are found and support covers the tail") {
  auto G = PotentialSpec::gaussian(1, 1);
  CHECK(std::abs(G(G.support())) < 1e-29);
  auto r = tune_threshold(0, PotentialSpec::gaussian(0, 1), 1.0, 10.0);
  CHECK(std::abs(r.defect) < 1e-10);
  CHECK(count_nodes(0, PotentialSpec::gaussian(r.coupling, 1), G.support()) == 0);
}

TEST_CASE("two-well family: ell = 0 and ell = 1 simultaneously at threshold") {
  auto t = tune_two_well(reference_two_well(), 0, 1, {140, 150}, {0, 40});
  CHECK(std::abs(t.defect_a) < 1e-10);
  CHECK(std::abs(t.defect_b) < 1e-10);
  CHECK(std::abs(t.c1 - 144.447962364) < 1e-6);
  CHECK(std::abs(t.c2 - 14.598578010) < 1e-6);
  // second ell = 0 threshold, first ell = 1 threshold
  auto s = reference_two_well();
  s.c = t.c1;
  s.c2 = t.c2;
  CHECK(count_nodes(0, s, 1.0) == 1);
  CHECK(count_nodes(1, s, 1.0) == 0);
  CHECK_THROWS_AS(tune_two_well(reference_two_well(), 0, 1, {10, 20}, {0, 40}), BracketError);
  CHECK_THROWS_AS(tune_two_well(PotentialSpec::square_well(1), 0, 1, {140, 150}, {0, 40}), PotentialError);
}

TEST_CASE("matching radius inside the support is rejected; U convention") {
  CHECK_THROWS_AS(shoot_defect(0, PotentialSpec::square_well(1, 2), 1.0), PotentialError);
  auto V = PotentialSpec::square_well(3, 1);
  CHECK(V.sign(0.5) == -1);
  CHECK(V.sign(1.5) == 1);
  CHECK(std::abs(V.v(0.5) - std::sqrt(3.0)) < 1e-15);
}
