#include "fixtures.hpp"
#include "ndbal/ndbal.hpp"
#include "ndbal/samplers.hpp"
#include "ndbal/select.hpp"

#include <doctest.h>

#include <cmath>

using namespace ndbal;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

/// Random binary tables with a normalized Hamming distance; rows are distinct
/// with overwhelming probability.
struct HammingInstance {
  std::shared_ptr<FiniteLabeledSpace> space;
  DistanceFn distance;
  Structure target;
  std::shared_ptr<Oracle> oracle;

  HammingInstance(std::size_t structures, std::size_t atoms, std::uint64_t seed, double lambda = 1.0) {
    RngStream rng(seed);
    Eigen::MatrixXi tables(static_cast<Eigen::Index>(structures), static_cast<Eigen::Index>(atoms));
    for (Eigen::Index i = 0; i < tables.size(); ++i) tables.data()[i] = static_cast<int>(rng.index(2));
    space = std::make_shared<FiniteLabeledSpace>(ResponseSet({0, 1}), tables);
    Eigen::MatrixXd d(tables.rows(), tables.rows());
    for (Eigen::Index i = 0; i < tables.rows(); ++i)
      for (Eigen::Index j = 0; j < tables.rows(); ++j)
        d(i, j) = (tables.row(i).array() != tables.row(j).array()).cast<double>().mean();
    distance = table_distance(d);
    target = space->structures()[3];
    oracle = std::make_shared<Oracle>(lambda >= 1.0 ? noiseless_oracle(space, target)
                                                    : massart_oracle(space, target, lambda));
  }

  RunContext context() const { return RunContext{*space, *oracle, distance, {}, target}; }
};

}  // namespace

TEST_SUITE("ndbal") {
  TEST_CASE("enum names round-trip") {
    for (auto r : {UpdateRule::hard, UpdateRule::soft01, UpdateRule::general_loss})
      CHECK(parse_update_rule(to_string(r)) == r);
    for (auto a : {Algorithm::ndbal, Algorithm::random, Algorithm::qbc}) CHECK(parse_algorithm(to_string(a)) == a);
    CHECK(parse_query_mode("theory") == QueryMode::theory);
    CHECK(parse_loss("logistic") == Loss::logistic);
    CHECK_THROWS_AS(parse_update_rule("soft"), std::invalid_argument);
  }

  TEST_CASE("logistic loss") {
    CHECK(logistic_loss(0.0, 1.0) == doctest::Approx(std::log(2.0)));
    CHECK(logistic_loss(2.0, -1.0) == doctest::Approx(std::log1p(std::exp(2.0))));
    CHECK(logistic_loss(-800.0, 1.0) == doctest::Approx(800.0));
    CHECK(logistic_loss(800.0, 1.0) == doctest::Approx(0.0));
  }

  TEST_CASE("soft 0-1 update: two-structure example") {
    testing::FourByThree f;
    std::vector<Structure> two{f.space->structures()[0], f.space->structures()[2]};
    const WeightedEnsemble e = update_soft01(uniform_ensemble(two), f.space->atom(0), 0, 1.0, *f.space);
    const Eigen::VectorXd p = e.probabilities();
    CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    CHECK(p[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK_THROWS(update_soft01(uniform_ensemble(two), f.space->atom(0), 0, 0.0, *f.space));
  }

  TEST_CASE("hard update is the large-beta limit of soft 0-1") {
    testing::FourByThree f;
    const WeightedEnsemble hard = update_hard(f.uniform, f.space->atom(1), 1, *f.space);
    const WeightedEnsemble soft = update_soft01(f.uniform, f.space->atom(1), 1, 1e6, *f.space);
    const Eigen::VectorXd ph = hard.probabilities(), ps = soft.probabilities();
    CHECK(ph[0] == 0.0);
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(ph[i] == doctest::Approx(ps[i]).epsilon(1e-12));
    CHECK(ph[1] == doctest::Approx(1.0 / 3.0));

    WeightedEnsemble point{f.space->structures(), Eigen::Vector4d(0, -kInf, -kInf, -kInf)};
    CHECK_THROWS_AS(update_hard(point, f.space->atom(0), 1, *f.space), VersionSpaceEmpty);
  }

  TEST_CASE("general-loss update with the logistic loss") {
    auto space = std::make_shared<LinearClassifierSpace>(2);
    std::vector<Structure> gs{Structure{Eigen::Vector2d(1, 0)}, Structure{Eigen::Vector2d(-2, 1)}};
    const Atom a{0, Eigen::Vector2d(0.6, 0.8)};
    const double beta = 0.7;
    const WeightedEnsemble e = update_general_loss(uniform_ensemble(gs), a, -1, beta, Loss::logistic, *space);
    // Hand computation: margins 0.6 and -0.4, label -1.
    const double w0 = std::exp(-beta * std::log1p(std::exp(0.6)));
    const double w1 = std::exp(-beta * std::log1p(std::exp(-0.4)));
    CHECK(e.probabilities()[0] == doctest::Approx(w0 / (w0 + w1)));

    // Ensemble and continuous posteriors both accept the update.
    EnsemblePosterior ep(uniform_ensemble(gs));
    update_general_loss(ep, a, -1, beta, Loss::logistic, *space);
    CHECK(ep.ensemble()->probabilities()[0] == doctest::Approx(w0 / (w0 + w1)));
    ContinuousPosterior cp(2, 1.0);
    update_general_loss(cp, a, -1, beta, Loss::logistic, *space);
    CHECK(cp.term_count() == 1);
    CHECK_THROWS(apply_update(cp, UpdateRule::hard, a, -1, beta, Loss::logistic, *space));
  }

  TEST_CASE("query score: worked example") {
    testing::FourByThree f;
    const auto& gs = f.space->structures();
    const Atom a = f.space->atom(0);  // responses 0 0 1 1
    const std::vector<StructurePair> pairs{{gs[0], gs[1]}, {gs[0], gs[2]}};
    CHECK(score_query(pairs, a, kInf, Loss::zero_one, f.distance, *f.space) == doctest::Approx(0.5));
    const double beta = 0.8;
    CHECK(score_query(pairs, a, beta, Loss::zero_one, f.distance, *f.space) ==
          doctest::Approx((1.0 + std::exp(-beta)) / 2.0));
  }

  TEST_CASE("exact score with hard scoring is the largest split term") {
    testing::FourByThree f;
    for (std::size_t i = 0; i < 3; ++i) {
      const Atom a = f.space->atom(i);
      CHECK(score_query_exact(f.uniform, a, kInf, Loss::zero_one, f.distance, *f.space) ==
            doctest::Approx(split_terms(f.uniform, a, f.distance, *f.space).maxCoeff()));
    }
  }

  TEST_CASE("argmin_score agrees with score_query pair by pair") {
    testing::FourByThree f;
    const auto& gs = f.space->structures();
    std::vector<Structure> samples;
    std::vector<StructurePair> pairs;
    RngStream rng(1);
    for (int k = 0; k < 50; ++k) {
      const Structure& g = gs[rng.index(4)];
      const Structure& h = gs[rng.index(4)];
      samples.push_back(g);
      samples.push_back(h);
      pairs.emplace_back(g, h);
    }
    const std::vector<Atom> atoms{f.space->atom(2), f.space->atom(0), f.space->atom(1)};
    for (double beta : {0.5, 3.0, kInf}) {
      std::vector<double> scores;
      const std::size_t best = argmin_score(samples, atoms, beta, Loss::zero_one, f.distance, *f.space, &scores);
      for (std::size_t i = 0; i < atoms.size(); ++i)
        CHECK(scores[i] == doctest::Approx(score_query(pairs, atoms[i], beta, Loss::zero_one, f.distance, *f.space)));
      CHECK(best == 1);
    }
  }

  TEST_CASE("argmin_score with the logistic loss agrees with score_query") {
    LinearClassifierSpace space(4);
    RngStream rng(2);
    std::vector<Structure> samples;
    std::vector<StructurePair> pairs;
    for (int k = 0; k < 40; ++k) {
      Structure g{3.0 * rng.normal_vector(4)}, h{3.0 * rng.normal_vector(4)};
      samples.push_back(g);
      samples.push_back(h);
      pairs.emplace_back(g, h);
    }
    std::vector<Atom> atoms;
    for (int i = 0; i < 25; ++i) atoms.push_back(space.sample_atom(rng));
    const DistanceFn d = classifier_distance();
    for (double beta : {0.3, 1.0, 4.0}) {
      std::vector<double> scores;
      const std::size_t best = argmin_score(samples, atoms, beta, Loss::logistic, d, space, &scores);
      std::size_t oracle_best = 0;
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        const double s = score_query(pairs, atoms[i], beta, Loss::logistic, d, space);
        CHECK(scores[i] == doctest::Approx(s).epsilon(1e-10));
        if (s < score_query(pairs, atoms[oracle_best], beta, Loss::logistic, d, space)) oracle_best = i;
      }
      CHECK(best == oracle_best);
    }
  }

  TEST_CASE("config validation") {
    NdbalConfig cfg;
    CHECK_NOTHROW(validate(cfg));
    cfg.beta = 0.0;
    CHECK_THROWS_WITH_AS(validate(cfg), doctest::Contains("beta"), std::invalid_argument);
    cfg = {};
    cfg.alpha = 1.0;
    CHECK_THROWS(validate(cfg));
    cfg = {};
    cfg.delta = 0.0;
    CHECK_THROWS(validate(cfg));
    cfg = {};
    cfg.stop.enabled = true;
    cfg.stop.lambda_prior = 0.5;
    CHECK_THROWS(validate(cfg));

    HammingInstance inst(8, 6, 1, 0.5);
    cfg = {};
    cfg.update_rule = UpdateRule::soft01;
    cfg.theory_checks = true;
    cfg.beta = 0.06;
    CHECK_THROWS_WITH(validate(cfg, inst.oracle.get()), doctest::Contains("lambda/10"));
    cfg.beta = 0.05;
    CHECK_NOTHROW(validate(cfg, inst.oracle.get()));
  }

  TEST_CASE("scheduled atoms") {
    // floor(ln(4 * 2 / 0.05) / 0.1) = floor(50.75)
    CHECK(scheduled_atoms(0.1, 1, 0.05) == 50);
    CHECK(scheduled_atoms(100.0, 1, 0.05) == 1);
    CHECK(scheduled_atoms(0.1, 10, 0.05) > scheduled_atoms(0.1, 1, 0.05));
  }

  TEST_CASE("noiseless run identifies the target") {
    HammingInstance inst(64, 24, 7);
    NdbalConfig cfg;
    cfg.update_rule = UpdateRule::hard;
    cfg.m_atoms = 24;
    cfg.budget = 40;
    cfg.target_error = 0.0;
    EnsemblePosterior post(uniform_ensemble(inst.space->structures()));
    RngStream rng(3);
    const RunRecord rec = run_ndbal(cfg, inst.context(), post, rng);
    CHECK(rec.stop_reason == "target_error");
    CHECK(rec.rounds.back().errors.front() == 0.0);
    CHECK(rec.query_count() < 20);
    CHECK(rec.rounds.front().round == 0);
    for (std::size_t t = 1; t < rec.rounds.size(); ++t) {
      CHECK(rec.rounds[t].queried);
      CHECK(rec.rounds[t].measured_split >= 0.0);
    }
  }

  TEST_CASE("theory mode and baselines run under Massart noise") {
    HammingInstance inst(32, 16, 11, 0.6);
    NdbalConfig cfg;
    cfg.update_rule = UpdateRule::soft01;
    cfg.beta = 0.06;
    cfg.theory_checks = true;
    cfg.mode = QueryMode::theory;
    cfg.m_atoms = 8;
    cfg.budget = 10;
    cfg.select_k_max = 2000;
    for (Algorithm alg : {Algorithm::ndbal, Algorithm::random, Algorithm::qbc}) {
      EnsemblePosterior post(uniform_ensemble(inst.space->structures()));
      RngStream rng(4);
      const RunRecord rec = run_algorithm(alg, cfg, inst.context(), post, rng);
      CHECK(rec.algorithm == to_string(alg));
      CHECK(rec.round_count() == 10);
      CHECK(rec.stop_reason == "budget");
      for (const auto& r : rec.rounds) {
        CHECK(r.errors.size() == 1);
        CHECK(r.errors.front() >= 0.0);
      }
      if (alg == Algorithm::ndbal)
        for (std::size_t t = 1; t < rec.rounds.size(); ++t) CHECK(rec.rounds[t].structures_sampled > 0);
    }
  }

  TEST_CASE("QBC gives up on a consensus posterior") {
    HammingInstance inst(16, 8, 2);
    NdbalConfig cfg;
    cfg.qbc_attempt_cap = 50;
    cfg.update_rule = UpdateRule::hard;
    EnsemblePosterior post(WeightedEnsemble{{inst.target}, Eigen::VectorXd::Zero(1)});
    RngStream rng(1);
    const RunRecord rec = run_qbc_baseline(cfg, inst.context(), post, rng);
    CHECK(rec.stop_reason == "consensus");
    CHECK(rec.query_count() == 0);
    CHECK(rec.rounds.size() == 2);
    CHECK(rec.rounds.back().atoms_drawn == 50);
  }

  TEST_CASE("stopping rule ends a converged run") {
    HammingInstance inst(16, 8, 2);
    NdbalConfig cfg;
    cfg.update_rule = UpdateRule::hard;
    cfg.m_atoms = 8;
    cfg.stop.enabled = true;
    cfg.stop.eps = 0.1;
    EnsemblePosterior post(uniform_ensemble(inst.space->structures()));
    RngStream rng(8);
    const RunRecord rec = run_ndbal(cfg, inst.context(), post, rng);
    CHECK(rec.stop_reason == "stopping_rule");
    CHECK(rec.round_count() < cfg.budget);
  }

  TEST_CASE("runs are reproducible from the seed") {
    HammingInstance inst(32, 16, 5, 0.5);
    NdbalConfig cfg;
    cfg.update_rule = UpdateRule::soft01;
    cfg.m_atoms = 16;
    cfg.budget = 15;
    auto once = [&] {
      EnsemblePosterior post(uniform_ensemble(inst.space->structures()));
      RngStream rng(99, "run");
      return run_ndbal(cfg, inst.context(), post, rng);
    };
    const RunRecord a = once(), b = once();
    REQUIRE(a.rounds.size() == b.rounds.size());
    for (std::size_t t = 0; t < a.rounds.size(); ++t) {
      CHECK(a.rounds[t].atom_id == b.rounds[t].atom_id);
      CHECK(a.rounds[t].response == b.rounds[t].response);
      CHECK(a.rounds[t].errors == b.rounds[t].errors);
    }
  }

  TEST_CASE("continuous posterior run produces sampled diagnostics") {
    auto space = std::make_shared<LinearClassifierSpace>(3);
    const Structure target{Eigen::Vector3d(2, -1, 0.5)};
    const Oracle oracle = logistic_oracle(space, target.params);
    const DistanceFn d = classifier_distance();
    NdbalConfig cfg;
    cfg.m_atoms = 20;
    cfg.n_pairs = 20;
    cfg.budget = 3;
    MalaSettings mala;
    mala.burn_in = 50;
    ContinuousPosterior post(3, 2.0, mala);
    RngStream rng(6);
    const RunRecord rec = run_ndbal(cfg, RunContext{*space, oracle, d, {}, target}, post, rng);
    CHECK(rec.round_count() == 3);
    CHECK(post.term_count() == 3);
    for (const auto& r : rec.rounds) {
      CHECK(std::isfinite(r.errors.front()));
      CHECK(std::isnan(r.measured_split));
    }
    CHECK(rec.rounds[1].structures_sampled == 40);
  }
}
