#include "ndbal/samplers.hpp"

#include <doctest.h>

#include <cmath>

using namespace ndbal;

namespace {

LogTarget gaussian_target(const Eigen::VectorXd& mu, const Eigen::MatrixXd& precision) {
  return LogTarget{[mu, precision](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
    const Eigen::VectorXd r = w - mu;
    if (grad) *grad = -precision * r;
    return -0.5 * r.dot(precision * r);
  }};
}

}  // namespace

TEST_SUITE("samplers") {
  TEST_CASE("finite sampling follows the weights") {
    std::vector<Structure> gs{Structure{Eigen::VectorXd(), 0}, Structure{Eigen::VectorXd(), 1},
                              Structure{Eigen::VectorXd(), 2}};
    const Eigen::Vector3d p(0.2, 0.5, 0.3);
    EnsemblePosterior post(WeightedEnsemble{gs, p.array().log().matrix()});
    RngStream rng(4);
    const int n = 60000;
    std::array<int, 3> counts{};
    for (const auto& g : post.sample(n, rng)) ++counts[static_cast<std::size_t>(g.id)];
    for (Eigen::Index i = 0; i < 3; ++i)
      CHECK(std::abs(counts[static_cast<std::size_t>(i)] / double(n) - p[i]) < 4 * std::sqrt(p[i] * (1 - p[i]) / n));
  }

  TEST_CASE("acceptance probability matches the Langevin proposal densities") {
    const Eigen::Vector2d mu(1, -1);
    const Eigen::Matrix2d prec = Eigen::Vector2d(2.0, 0.5).asDiagonal();
    const LogTarget t = gaussian_target(mu, prec);
    const Eigen::Vector2d x(0.3, 0.2), y(0.9, -0.4);
    const double eta = 0.3;
    auto log_q = [&](const Eigen::VectorXd& to, const Eigen::VectorXd& from) {
      return -(to - from - eta * t.gradient(from)).squaredNorm() / (4 * eta);
    };
    const double log_ratio = t.log_density(y) - t.log_density(x) + log_q(x, y) - log_q(y, x);
    const double expected = std::min(1.0, std::exp(log_ratio));
    CHECK(mala_accept_probability(x, t.log_density(x), t.gradient(x), y, t.log_density(y), t.gradient(y), eta) ==
          doctest::Approx(expected));
    CHECK(mala_accept_probability(x, t.log_density(x), t.gradient(x), y, -std::numeric_limits<double>::infinity(),
                                  t.gradient(y), eta) == 0.0);
  }

  TEST_CASE("step adaptation") {
    MalaChain chain;
    chain.step = 1.0;
    for (int i = 0; i < 50; ++i) chain.record(true);
    adapt_step(chain);
    CHECK(chain.step == doctest::Approx(1.1));
    for (int i = 0; i < 50; ++i) chain.record(false);
    CHECK(chain.window.size() == 50);
    adapt_step(chain);
    CHECK(chain.step == doctest::Approx(0.99));
    for (int i = 0; i < 50; ++i) chain.record(i % 5 != 0);  // 0.8 -> grow
    for (int i = 0; i < 50; ++i) chain.record(i % 5 < 3);   // 0.6 -> hold
    adapt_step(chain);
    CHECK(chain.step == doctest::Approx(0.99));
  }

  TEST_CASE("MALA recovers Gaussian moments") {
    const Eigen::Vector2d mu(1.5, -0.5);
    Eigen::Matrix2d cov;
    cov << 1.0, 0.6, 0.6, 2.0;
    const LogTarget t = gaussian_target(mu, cov.inverse());
    MalaChain chain;
    chain.state = Eigen::Vector2d::Zero();
    chain.step = 0.5;
    chain.refresh(t);
    RngStream rng(12);
    const auto draws = run_chain(chain, t, 20000, rng);
    REQUIRE(draws.size() == 20000);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& w : draws) mean += w;
    mean /= static_cast<double>(draws.size());
    Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
    for (const auto& w : draws) c += (w - mean) * (w - mean).transpose();
    c /= static_cast<double>(draws.size() - 1);
    // Thinned draws are correlated; tolerances allow an effective size near 2000.
    CHECK((mean - mu).norm() < 0.1);
    CHECK((c - cov).cwiseAbs().maxCoeff() < 0.2);
    const double rate = double(chain.accepted) / double(chain.accepted + chain.rejected);
    CHECK(rate > 0.3);
  }

  TEST_CASE("continuous posterior density and gradient") {
    ContinuousPosterior post(3, 2.0);
    post.add_term(Eigen::Vector3d(1, 0, 0), 1.0, 0.5);
    post.add_term(Eigen::Vector3d(0, 1, 1), -1.0, 2.0);
    const Eigen::Vector3d w(0.3, -0.7, 1.2);
    const double expected = -0.5 * std::log1p(std::exp(-0.3)) - 2.0 * std::log1p(std::exp(0.5)) -
                            w.squaredNorm() / 8.0;
    CHECK(post.log_density(w) == doctest::Approx(expected));
    const Eigen::VectorXd g = post.gradient(w);
    for (Eigen::Index i = 0; i < 3; ++i) {
      Eigen::Vector3d e = Eigen::Vector3d::Zero();
      e[i] = 1e-6;
      const double fd = (post.log_density(w + e) - post.log_density(w - e)) / 2e-6;
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }

  TEST_CASE("continuous posterior without terms samples the Gaussian prior") {
    MalaSettings s;
    s.burn_in = 500;
    ContinuousPosterior post(4, 3.0, s);
    RngStream rng(21);
    const auto draws = post.sample(8000, rng);
    double sq = 0, m = 0;
    for (const auto& g : draws) {
      sq += g.params.squaredNorm();
      m += g.params.sum();
    }
    CHECK(std::abs(sq / draws.size() - 36.0) < 3.6);
    CHECK(std::abs(m / draws.size()) < 0.6);
  }

  TEST_CASE("continuous posterior concentrates along the data") {
    ContinuousPosterior post(2, 5.0);
    for (int i = 0; i < 200; ++i) post.add_term(Eigen::Vector2d(1, 0), 1.0, 1.0);
    RngStream rng(2);
    const auto draws = post.sample(1000, rng);
    int positive = 0;
    for (const auto& g : draws) positive += g.params[0] > 0;
    CHECK(positive > 990);
  }

  TEST_CASE("finite sampling edge cases") {
    std::vector<Structure> gs{Structure{Eigen::VectorXd(), 0}, Structure{Eigen::VectorXd(), 1}};
    const double ninf = -std::numeric_limits<double>::infinity();
    EnsemblePosterior point(WeightedEnsemble{gs, Eigen::Vector2d(ninf, 0.0)});
    RngStream rng(1);
    for (const auto& g : point.sample(1000, rng)) REQUIRE(g.id == 1);

    EnsemblePosterior skew(WeightedEnsemble{gs, Eigen::Vector2d(std::log(0.9), std::log(0.1))});
    int zeros = 0;
    for (const auto& g : skew.sample(100000, rng)) zeros += g.id == 0;
    CHECK(std::abs(zeros / 1e5 - 0.9) < 0.01);
  }

  TEST_CASE("proposal at the current state is always accepted") {
    const LogTarget t = gaussian_target(Eigen::Vector2d(0.5, 0), Eigen::Matrix2d::Identity());
    const Eigen::Vector2d x(0.3, -0.2);
    CHECK(mala_accept_probability(x, t.log_density(x), t.gradient(x), x, t.log_density(x), t.gradient(x), 0.4) ==
          doctest::Approx(1.0));
  }

  TEST_CASE("tiny steps are almost always accepted") {
    ContinuousPosterior prior(3, 1.0);
    const LogTarget t = prior.target();
    MalaChain chain = prior.chain();
    chain.step = 1e-8;
    chain.refresh(t);
    RngStream rng(3);
    for (int i = 0; i < 1000; ++i) mala_step(chain, t, rng);
    CHECK(double(chain.accepted) / 1000.0 >= 0.99);
    CHECK(prior.gradient(Eigen::Vector3d(1, -2, 0.5)).isApprox(Eigen::Vector3d(-1, 2, -0.5)));
  }

  TEST_CASE("step stays frozen after burn-in") {
    ContinuousPosterior prior(2, 1.0);
    const LogTarget t = prior.target();
    MalaChain chain = prior.chain();
    chain.refresh(t);
    chain.burn_in = 200;
    RngStream rng(4);
    run_chain(chain, t, 0, rng);
    const double eta = chain.step;
    chain.burn_in = 0;
    run_chain(chain, t, 500, rng);
    CHECK(chain.step == eta);
  }

  TEST_CASE("one decisive logistic term confines the samples to its halfspace") {
    ContinuousPosterior post(3, 1.0);
    const Eigen::Vector3d x(0.6, 0.0, 0.8);
    post.add_term(x, -1.0, 200.0);
    RngStream rng(5);
    const auto draws = post.sample(2000, rng);
    int inside = 0;
    for (const auto& g : draws) inside += -x.dot(g.params) > 0;
    CHECK(inside >= 0.95 * draws.size());
  }

  TEST_CASE("independent chains agree on the first moment") {
    auto run = [](std::uint64_t seed) {
      ContinuousPosterior post(2, 2.0);
      post.add_term(Eigen::Vector2d(1, 0), 1.0, 1.0);
      post.add_term(Eigen::Vector2d(0.6, 0.8), -1.0, 1.0);
      RngStream rng(seed);
      std::vector<double> xs;
      for (const auto& g : post.sample(5000, rng)) xs.push_back(g.params[0]);
      return mean_estimate(xs);
    };
    const MeanEstimate a = run(1), b = run(2);
    // Thinned draws are autocorrelated; inflate the naive standard error.
    const double se = 3.0 * std::hypot(a.std_err, b.std_err);
    CHECK(std::abs(a.value - b.value) < 4 * se);
  }

  TEST_CASE("binned one-dimensional draws pass a chi-squared test") {
    MalaSettings s;
    s.thinning = 10;
    ContinuousPosterior post(1, 1.0, s);
    RngStream rng(6);
    const std::size_t n = 4000, bins = 10;
    // Equiprobable bin edges of N(0, 1) by bisection on the CDF.
    auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
    std::vector<double> edges;
    for (std::size_t k = 1; k < bins; ++k) {
      double lo = -10, hi = 10;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (cdf(mid) < double(k) / bins ? lo : hi) = mid;
      }
      edges.push_back(lo);
    }
    std::vector<double> counts(bins, 0.0);
    for (const auto& g : post.sample(n, rng))
      counts[static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), g.params[0]) - edges.begin())] += 1;
    double chi2 = 0;
    const double expect = double(n) / bins;
    for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
    CHECK(chi2 < 21.666);  // chi-squared, 9 degrees of freedom, 1% level
  }

  TEST_CASE("log density is concave along segments between draws") {
    ContinuousPosterior post(3, 2.0);
    post.add_term(Eigen::Vector3d(1, 0, 0), 1.0, 2.0);
    post.add_term(Eigen::Vector3d(0, 0.6, 0.8), -1.0, 0.5);
    RngStream rng(7);
    const auto draws = post.sample(200, rng);
    for (std::size_t i = 0; i + 1 < draws.size(); i += 2) {
      const Eigen::VectorXd& u = draws[i].params;
      const Eigen::VectorXd& v = draws[i + 1].params;
      for (double s : {0.25, 0.5, 0.75}) {
        const double chord = (1 - s) * post.log_density(u) + s * post.log_density(v);
        CHECK(post.log_density((1 - s) * u + s * v) >= chord - 1e-9);
      }
    }
  }
}
