#include "fixtures.hpp"
#include "ndbal/splitting.hpp"

#include <doctest.h>

#include <cmath>

using namespace ndbal;

TEST_SUITE("splitting") {
  TEST_CASE("Wilson interval reference values") {
    const BinomialCI a = wilson_interval(8, 10);
    CHECK(a.lo == doctest::Approx(0.4902).epsilon(1e-3));
    CHECK(a.hi == doctest::Approx(0.9433).epsilon(1e-3));
    const BinomialCI z = wilson_interval(0, 10);
    CHECK(z.lo == 0.0);
    CHECK(z.hi == doctest::Approx(1.96 * 1.96 / (10 + 1.96 * 1.96)));
    const BinomialCI o = wilson_interval(10, 10);
    CHECK(o.hi == 1.0);
    CHECK(o.lo == doctest::Approx(10.0 / (10 + 1.96 * 1.96)));
    CHECK(wilson_interval(0, 0).lo == 0.0);
    CHECK(wilson_interval(0, 0).hi == 1.0);
    CHECK_THROWS(wilson_interval(3, 2));
  }

  TEST_CASE("index rho star") {
    CHECK(index_rho_star(0.1) == doctest::Approx(1.0 / 80.0));  // ceil(log2 20) = 5
    CHECK(index_rho_star(0.5) == doctest::Approx(1.0 / 32.0));  // log2 4 = 2
    const auto grid = default_rho_grid(0.01);
    CHECK(grid == std::vector<double>{0.005, 0.01, 0.02, 0.1, 0.25, 0.5});
  }

  TEST_CASE("edge split on the four-structure example") {
    testing::FourByThree f;
    const EdgeSet edges = make_edge_set(f.space->structures(), f.distance, 0.5);
    REQUIRE(edges.size() == 6);
    CHECK(edge_split(edges, f.space->atom(0), *f.space) == doctest::Approx(5.0 / 6.0));
    CHECK(edge_split(edges, f.space->atom(1), *f.space) == doctest::Approx(0.5));
    CHECK(edge_split(edges, f.space->atom(2), *f.space) == doctest::Approx(0.0));
    CHECK(make_edge_set(f.space->structures(), f.distance, 1.0).size() == 0);
    CHECK_THROWS(edge_split(EdgeSet{}, f.space->atom(0), *f.space));
  }

  TEST_CASE("empirical index on the four-structure example") {
    testing::FourByThree f;
    RngStream rng(3);
    const std::size_t n = 30000;
    const IndexReport r = estimate_avg_split_tau(*f.space, f.uniform, f.distance, {0.1, 0.6, 0.9}, n, rng);
    // Atom splits are 5/6, 1/2 and 0, each drawn with probability 1/3.
    const std::vector<double> expected{2.0 / 3.0, 1.0 / 3.0, 0.0};
    for (std::size_t i = 0; i < 3; ++i) {
      const double sd = std::sqrt(expected[i] * (1 - expected[i]) / n);
      CHECK(std::abs(r.tau_hat[i] - expected[i]) <= 4 * sd + 1e-12);
      CHECK(r.ci[i].lo <= r.tau_hat[i]);
      CHECK(r.ci[i].hi >= r.tau_hat[i]);
    }
    const double ninf = -std::numeric_limits<double>::infinity();
    WeightedEnsemble point{f.space->structures(), Eigen::Vector4d(0, ninf, ninf, ninf)};
    CHECK_THROWS_AS(estimate_avg_split_tau(*f.space, point, f.distance, {0.1}, 10, rng), DegeneratePosterior);
  }

  TEST_CASE("splitting versus average splitting probe") {
    testing::FourByThree f;
    const EdgeSet edges = make_edge_set(f.space->structures(), f.distance, 0.5);
    RngStream rng(1);
    const auto rows = splitting_vs_avg_splitting_probe(*f.space, f.uniform, edges, f.distance, 30, rng);
    CHECK(rows.size() == 30);
    for (const auto& r : rows) {
      // With a 0/1 distance and a uniform ensemble the two notions coincide.
      CHECK(r.edge_split == doctest::Approx(r.average_split));
    }
  }

  TEST_CASE("ranking index stays bounded away from zero and scales with eps") {
    RngStream rng(7);
    IndexProbeSettings s;
    s.atoms_per_ensemble = 150;
    std::vector<double> c;
    for (double eps : {0.05, 0.1, 0.2}) {
      const IndexVerification v = verify_ranking_index(2, eps, 20, rng, s);
      CHECK(v.ci_excludes_zero());
      CHECK(v.ensembles_used > 0);
      CHECK(v.rho_star == doctest::Approx(index_rho_star(eps)));
      c.push_back(v.c_hat);
    }
    const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
    CHECK(*hi / *lo < 3.0);
  }

  TEST_CASE("interval index meets its floor") {
    RngStream rng(8);
    const IndexVerification v = verify_interval_index(4, Interval{0.0, 0.2}, 0.1, 20, rng);
    CHECK(v.tau_floor == doctest::Approx(0.01));
    CHECK(v.ci_excludes_zero());
    CHECK_FALSE(v.floor_violated());
  }
}
