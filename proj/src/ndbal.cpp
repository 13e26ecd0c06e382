#include "ndbal/ndbal.hpp"

#include "ndbal/diameter.hpp"
#include "ndbal/samplers.hpp"
#include "ndbal/select.hpp"

#include <cmath>

namespace ndbal {

namespace {

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> table,
             const char* what) {
  for (const auto& [name, value] : table)
    if (s == name) return value;
  throw std::invalid_argument(std::string("unknown ") + what + " '" + s + "'");
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// exp(-beta * l) with the conventions 0 * inf = 0 and beta = inf -> 1[l = 0].
double loss_factor(double beta, double l) {
  if (l == 0.0) return 1.0;
  if (std::isinf(beta)) return 0.0;
  return std::exp(-beta * l);
}

const LinearMarginSpace& require_margin_space(const StructureSpace& space) {
  const auto* lm = dynamic_cast<const LinearMarginSpace*>(&space);
  if (lm == nullptr)
    throw std::invalid_argument("logistic loss needs a linear-margin structure space");
  return *lm;
}

double require_pm1(Response y) {
  if (y != 1 && y != -1) throw std::invalid_argument("logistic loss needs labels in {-1, +1}");
  return static_cast<double>(y);
}

/// Loss table l(g(a), y) for every (structure, atom), one matrix per response.
std::vector<Eigen::MatrixXd> loss_tables(const std::vector<Structure>& gs,
                                         const std::vector<Atom>& atoms, Loss loss,
                                         const StructureSpace& space) {
  const ResponseSet& ys = space.responses();
  const auto rows = static_cast<Eigen::Index>(gs.size());
  const auto cols = static_cast<Eigen::Index>(atoms.size());
  std::vector<Eigen::MatrixXd> out(ys.size(), Eigen::MatrixXd::Zero(rows, cols));

  if (loss == Loss::logistic) {
    const LinearMarginSpace& lm = require_margin_space(space);
    const Eigen::Index dim = lm.dimension();
    Eigen::MatrixXd W(rows, dim), Phi(dim, cols);
    for (Eigen::Index r = 0; r < rows; ++r) W.row(r) = gs[static_cast<std::size_t>(r)].params.transpose();
    for (Eigen::Index c = 0; c < cols; ++c) Phi.col(c) = lm.feature(atoms[static_cast<std::size_t>(c)]);
    // softplus(-y z) = max(-y z, 0) + log(1 + exp(-|z|)); the log term is shared by both labels.
    // The packet log of 1 + e loses at most ~1e-16 absolutely against log1p, at a fraction of the cost.
    const Eigen::ArrayXXd Z = (W * Phi).array();
    const Eigen::ArrayXXd tail = ((-Z.abs()).exp() + 1.0).log();
    for (std::size_t k = 0; k < ys.size(); ++k) {
      const double y = require_pm1(ys[k]);
      out[k] = ((-y * Z).max(0.0) + tail).matrix();
    }
    return out;
  }

  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) {
      const std::size_t resp = ys.index_of(
          space.evaluate(gs[static_cast<std::size_t>(r)], atoms[static_cast<std::size_t>(c)]));
      for (std::size_t k = 0; k < ys.size(); ++k) out[k](r, c) = k == resp ? 0.0 : 1.0;
    }
  return out;
}

Eigen::MatrixXd factors(const Eigen::MatrixXd& losses, double beta) {
  if (std::isinf(beta)) return losses.unaryExpr([beta](double l) { return loss_factor(beta, l); });
  // Losses are finite here, so the packet exp is exact enough; exp(-0) is exactly 1.
  return (-beta * losses.array()).exp().matrix();
}

/// Exact scores for every candidate: max_y v_y' D v_y with
/// v_y = w .* exp(-beta l(., y)).
Eigen::VectorXd exact_scores(const WeightedEnsemble& e, const Eigen::MatrixXd& D,
                             const std::vector<Atom>& atoms, double beta, Loss loss,
                             const StructureSpace& space) {
  const Eigen::VectorXd w = e.probabilities();
  const auto tables = loss_tables(e.structures, atoms, loss, space);
  Eigen::VectorXd best = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(atoms.size()),
                                                   -std::numeric_limits<double>::infinity());
  for (const auto& L : tables) {
    const Eigen::MatrixXd V = w.asDiagonal() * factors(L, beta);
    const Eigen::VectorXd s = (V.array() * (D * V).array()).colwise().sum().transpose();
    best = best.cwiseMax(s);
  }
  return best;
}

std::size_t argmin_index(const Eigen::VectorXd& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] < v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  return best;
}

}  // namespace

std::string to_string(UpdateRule r) {
  switch (r) {
    case UpdateRule::hard: return "hard";
    case UpdateRule::soft01: return "soft01";
    case UpdateRule::general_loss: return "general_loss";
  }
  return "?";
}

std::string to_string(Loss l) { return l == Loss::zero_one ? "zero_one" : "logistic"; }
std::string to_string(QueryMode m) { return m == QueryMode::theory ? "theory" : "heuristic"; }

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::ndbal: return "ndbal";
    case Algorithm::random: return "random";
    case Algorithm::qbc: return "qbc";
  }
  return "?";
}

UpdateRule parse_update_rule(const std::string& s) {
  return parse_enum<UpdateRule>(
      s, {{"hard", UpdateRule::hard}, {"soft01", UpdateRule::soft01}, {"general_loss", UpdateRule::general_loss}},
      "update rule");
}

Loss parse_loss(const std::string& s) {
  return parse_enum<Loss>(s, {{"zero_one", Loss::zero_one}, {"logistic", Loss::logistic}}, "loss");
}

QueryMode parse_query_mode(const std::string& s) {
  return parse_enum<QueryMode>(s, {{"theory", QueryMode::theory}, {"heuristic", QueryMode::heuristic}},
                               "mode");
}

Algorithm parse_algorithm(const std::string& s) {
  return parse_enum<Algorithm>(
      s, {{"ndbal", Algorithm::ndbal}, {"random", Algorithm::random}, {"qbc", Algorithm::qbc}}, "algorithm");
}

double logistic_loss(double z, double y) { return softplus(-z * y); }

double loss_value(Loss loss, const StructureSpace& space, const Structure& g, const Atom& a,
                  Response y) {
  if (loss == Loss::zero_one) return space.evaluate(g, a) == y ? 0.0 : 1.0;
  return logistic_loss(require_margin_space(space).margin(g, a), require_pm1(y));
}

// ---------------------------------------------------------------------------

WeightedEnsemble update_hard(const WeightedEnsemble& e, const Atom& a, Response y,
                             const StructureSpace& space) {
  WeightedEnsemble out = e;
  bool any = false;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (space.evaluate(e.structures[i], a) != y)
      out.log_weights[k] = -std::numeric_limits<double>::infinity();
    else if (std::isfinite(out.log_weights[k]))
      any = true;
  }
  if (!any) throw VersionSpaceEmpty("version space empty: no structure is consistent with the response");
  return normalize(std::move(out));
}

WeightedEnsemble update_soft01(const WeightedEnsemble& e, const Atom& a, Response y, double beta,
                               const StructureSpace& space) {
  if (!(beta > 0.0)) throw std::invalid_argument("update_soft01: beta must be > 0");
  return update_general_loss(e, a, y, beta, Loss::zero_one, space);
}

WeightedEnsemble update_general_loss(const WeightedEnsemble& e, const Atom& a, Response y,
                                     double beta, Loss loss, const StructureSpace& space) {
  if (!(beta >= 0.0)) throw std::invalid_argument("update: beta must be >= 0");
  WeightedEnsemble out = e;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double l = loss_value(loss, space, e.structures[i], a, y);
    if (l != 0.0) out.log_weights[static_cast<Eigen::Index>(i)] -= beta * l;
  }
  return normalize(std::move(out));
}

void update_general_loss(Posterior& p, const Atom& a, Response y, double beta, Loss loss,
                         const StructureSpace& space) {
  if (auto* ens = dynamic_cast<EnsemblePosterior*>(&p)) {
    ens->reset(update_general_loss(*ens->ensemble(), a, y, beta, loss, space));
    return;
  }
  if (auto* cont = dynamic_cast<ContinuousPosterior*>(&p)) {
    if (loss != Loss::logistic)
      throw std::invalid_argument("continuous posteriors need a convex (logistic) loss");
    cont->add_term(require_margin_space(space).feature(a), require_pm1(y), beta);
    return;
  }
  throw std::invalid_argument("update: unsupported posterior type");
}

void apply_update(Posterior& p, UpdateRule rule, const Atom& a, Response y, double beta, Loss loss,
                  const StructureSpace& space) {
  if (rule == UpdateRule::general_loss) {
    update_general_loss(p, a, y, beta, loss, space);
    return;
  }
  auto* ens = dynamic_cast<EnsemblePosterior*>(&p);
  if (ens == nullptr)
    throw std::invalid_argument("hard and soft01 updates need a finite ensemble posterior");
  ens->reset(rule == UpdateRule::hard ? update_hard(*ens->ensemble(), a, y, space)
                                      : update_soft01(*ens->ensemble(), a, y, beta, space));
}

// ---------------------------------------------------------------------------

double score_query(const std::vector<StructurePair>& pairs, const Atom& a, double beta, Loss loss,
                   const DistanceFn& d, const StructureSpace& space) {
  if (pairs.empty()) throw std::invalid_argument("score_query: no structure pairs");
  const ResponseSet& ys = space.responses();
  double best = 0.0;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    double sum = 0.0;
    for (const auto& [g, h] : pairs) {
      const double dist = d(g, h);
      if (dist == 0.0) continue;
      sum += dist * loss_factor(beta, loss_value(loss, space, g, a, ys[k])) *
             loss_factor(beta, loss_value(loss, space, h, a, ys[k]));
    }
    best = std::max(best, sum / static_cast<double>(pairs.size()));
  }
  return best;
}

double score_query_exact(const WeightedEnsemble& e, const Atom& a, double beta, Loss loss,
                         const DistanceFn& d, const StructureSpace& space) {
  return exact_scores(e, pairwise_distances(e.structures, d), {a}, beta, loss, space)[0];
}

std::size_t argmin_score(const std::vector<Structure>& samples, const std::vector<Atom>& atoms,
                         double beta, Loss loss, const DistanceFn& d, const StructureSpace& space,
                         std::vector<double>* scores) {
  if (atoms.empty()) throw std::invalid_argument("argmin_score: no candidate atoms");
  const std::size_t n_pairs = samples.size() / 2;
  if (n_pairs == 0) throw std::invalid_argument("argmin_score: need at least one structure pair");

  // Only pairs at positive distance contribute.
  std::vector<Structure> live;
  std::vector<double> dist;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const double v = d(samples[2 * p], samples[2 * p + 1]);
    if (v == 0.0) continue;
    dist.push_back(v);
    live.push_back(samples[2 * p]);
    live.push_back(samples[2 * p + 1]);
  }

  Eigen::VectorXd best = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(atoms.size()));
  if (!dist.empty()) {
    const Eigen::Map<const Eigen::VectorXd> dv(dist.data(), static_cast<Eigen::Index>(dist.size()));
    for (const auto& L : loss_tables(live, atoms, loss, space)) {
      const Eigen::MatrixXd F = factors(L, beta);
      const auto P = static_cast<Eigen::Index>(dist.size());
      Eigen::MatrixXd prod(P, F.cols());
      for (Eigen::Index p = 0; p < P; ++p) prod.row(p) = F.row(2 * p).cwiseProduct(F.row(2 * p + 1));
      best = best.cwiseMax(prod.transpose() * dv / static_cast<double>(n_pairs));
    }
  }
  if (scores != nullptr) scores->assign(best.data(), best.data() + best.size());
  return argmin_index(best);
}

// ---------------------------------------------------------------------------

void validate(const NdbalConfig& cfg, const Oracle* oracle) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ndbal config: " + m); };
  if (!(cfg.beta > 0.0)) fail("beta must be > 0");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) fail("alpha must lie in (0, 1)");
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) fail("delta must lie in (0, 1)");
  if (cfg.m_atoms < 1) fail("m_atoms must be >= 1");
  if (cfg.n_pairs < 1) fail("n_pairs must be >= 1");
  if (cfg.tau && !(*cfg.tau > 0.0)) fail("tau must be > 0");
  if (cfg.qbc_attempt_cap < 1) fail("qbc_attempt_cap must be >= 1");
  if (cfg.stop.enabled && !(cfg.stop.eps > 0.0)) fail("stop.eps must be > 0");
  if (cfg.stop.enabled && !(cfg.stop.lambda_prior >= 1.0)) fail("stop.lambda must be >= 1");
  if (cfg.theory_checks && cfg.update_rule == UpdateRule::soft01 && oracle != nullptr &&
      oracle->noise().massart_margin) {
    const double lambda = *oracle->noise().massart_margin;
    if (cfg.beta > lambda / 10.0 + 1e-12)
      fail("soft01 against a Massart oracle needs beta <= lambda/10 (lambda = " +
           std::to_string(lambda) + ")");
  }
}

std::size_t scheduled_atoms(double tau, std::size_t t, double delta) {
  if (!(tau > 0.0)) throw std::invalid_argument("scheduled_atoms: tau must be > 0");
  const double td = static_cast<double>(t);
  const double m = std::floor(std::log(4.0 * td * (td + 1.0) / delta) / tau);
  return m < 1.0 ? 1 : static_cast<std::size_t>(m);
}

std::size_t RunRecord::query_count() const {
  std::size_t n = 0;
  for (const auto& r : rounds) n += r.queried;
  return n;
}

namespace {

class Runner {
 public:
  Runner(Algorithm alg, const NdbalConfig& cfg, const RunContext& ctx, Posterior& posterior,
         RngStream& rng)
      : alg_(alg),
        cfg_(cfg),
        ctx_(ctx),
        post_(posterior),
        atoms_rng_(rng.bits(), "atoms"),
        select_rng_(rng.bits(), "select"),
        oracle_rng_(rng.bits(), "oracle"),
        sampler_rng_(rng.bits(), "sampler"),
        stop_rng_(rng.bits(), "stop") {
    validate(cfg, &ctx.oracle);
    metrics_ = ctx.metrics.empty() ? std::vector<DistanceFn>{ctx.distance} : ctx.metrics;
    if (const WeightedEnsemble* e = post_.ensemble(); e != nullptr && e->size() <= kExactDiameterLimit)
      dist_ = pairwise_distances(e->structures, ctx.distance);
  }

  RunRecord run() {
    RunRecord rec;
    rec.algorithm = to_string(alg_);
    for (const auto& m : metrics_) rec.metric_names.push_back(m.name);

    RoundLog prior;
    snapshot(prior);
    rec.rounds.push_back(prior);

    for (std::size_t t = 1; t <= cfg_.budget; ++t) {
      if (cfg_.target_error && rec.rounds.back().errors.front() <= *cfg_.target_error) {
        rec.stop_reason = "target_error";
        break;
      }
      if (cfg_.stop.enabled) {
        const StopDecision s = stopping_check(post_, cfg_.stop.eps, cfg_.stop.lambda_prior, t,
                                              cfg_.delta, ctx_.distance, stop_rng_);
        if (s.stop) {
          rec.stop_reason = "stopping_rule";
          break;
        }
      }

      RoundLog log;
      log.round = t;
      std::optional<Atom> query = choose(t, log);
      if (!query) {
        log.errors = rec.rounds.back().errors;
        log.diameter = rec.rounds.back().diameter;
        rec.rounds.push_back(log);
        rec.stop_reason = "consensus";
        break;
      }
      log.queried = true;
      log.atom_id = query->id;
      log.measured_split = measured_split(*query);
      log.response = ctx_.oracle.respond(*query, oracle_rng_);
      apply_update(post_, cfg_.update_rule, *query, log.response, cfg_.beta, cfg_.loss, ctx_.space);
      snapshot(log);
      rec.rounds.push_back(log);
    }
    return rec;
  }

 private:
  bool exact() const { return dist_.size() > 0; }

  /// Scoring counterpart of the update rule.
  double score_beta() const {
    return cfg_.update_rule == UpdateRule::hard ? std::numeric_limits<double>::infinity() : cfg_.beta;
  }
  Loss score_loss() const {
    return cfg_.update_rule == UpdateRule::general_loss ? cfg_.loss : Loss::zero_one;
  }

  void snapshot(RoundLog& log) {
    log.errors.clear();
    if (exact()) {
      const WeightedEnsemble& e = *post_.ensemble();
      for (const auto& m : metrics_) log.errors.push_back(avg_dist_to_target_exact(e, ctx_.target, m));
      const Eigen::VectorXd w = e.probabilities();
      log.diameter = w.dot(dist_ * w);
      return;
    }
    pool_ = post_.sample(2 * cfg_.n_pairs, sampler_rng_);
    cursor_ = 0;
    for (const auto& m : metrics_) log.errors.push_back(avg_dist_from_samples(pool_, ctx_.target, m).value);
    log.diameter = avg_diam_from_samples(pool_, ctx_.distance).value;
  }

  std::vector<Atom> draw_atoms(std::size_t m) {
    std::vector<Atom> atoms;
    atoms.reserve(m);
    for (std::size_t i = 0; i < m; ++i) atoms.push_back(ctx_.space.sample_atom(atoms_rng_));
    return atoms;
  }

  std::optional<Atom> choose(std::size_t t, RoundLog& log) {
    switch (alg_) {
      case Algorithm::random:
        log.atoms_drawn = 1;
        return ctx_.space.sample_atom(atoms_rng_);
      case Algorithm::qbc:
        return choose_qbc(log);
      case Algorithm::ndbal:
        break;
    }

    const std::size_t m = cfg_.mode == QueryMode::theory && cfg_.tau
                              ? scheduled_atoms(*cfg_.tau, t, cfg_.delta)
                              : cfg_.m_atoms;
    std::vector<Atom> atoms = draw_atoms(m);
    log.atoms_drawn = m;

    if (cfg_.mode == QueryMode::theory) {
      try {
        const SelectResult r = select(post_, atoms, cfg_.alpha, cfg_.delta, ctx_.distance,
                                      ctx_.space, cfg_.select_k_max, select_rng_);
        log.structures_sampled = r.structures_sampled;
        return atoms[r.index];
      } catch (const SelectTimeout& e) {
        log.select_timeout = true;
        log.structures_sampled = 2 * e.rounds();
        return atoms[e.best_index()];
      }
    }

    if (exact()) {
      const Eigen::VectorXd s =
          exact_scores(*post_.ensemble(), dist_, atoms, score_beta(), score_loss(), ctx_.space);
      return atoms[argmin_index(s)];
    }
    log.structures_sampled = pool_.size();
    return atoms[argmin_score(pool_, atoms, score_beta(), score_loss(), ctx_.distance, ctx_.space)];
  }

  std::optional<Atom> choose_qbc(RoundLog& log) {
    for (std::size_t attempt = 1; attempt <= cfg_.qbc_attempt_cap; ++attempt) {
      const Atom a = ctx_.space.sample_atom(atoms_rng_);
      const auto [g, h] = next_pair();
      log.atoms_drawn = attempt;
      log.structures_sampled += 2;
      if (ctx_.space.evaluate(g, a) != ctx_.space.evaluate(h, a)) return a;
    }
    return std::nullopt;
  }

  StructurePair next_pair() {
    if (exact()) {
      std::vector<Structure> s = post_.sample(2, sampler_rng_);
      return {std::move(s[0]), std::move(s[1])};
    }
    if (cursor_ + 2 > pool_.size()) {
      pool_ = post_.sample(2 * cfg_.n_pairs, sampler_rng_);
      cursor_ = 0;
    }
    cursor_ += 2;
    return {pool_[cursor_ - 2], pool_[cursor_ - 1]};
  }

  double measured_split(const Atom& a) const {
    if (!exact()) return std::numeric_limits<double>::quiet_NaN();
    const WeightedEnsemble& e = *post_.ensemble();
    const ResponseSet& ys = ctx_.space.responses();
    std::vector<std::size_t> resp(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) resp[i] = ys.index_of(ctx_.space.evaluate(e.structures[i], a));
    return average_split(e.probabilities(), dist_, resp, ys.size());
  }

  Algorithm alg_;
  const NdbalConfig& cfg_;
  const RunContext& ctx_;
  Posterior& post_;
  RngStream atoms_rng_, select_rng_, oracle_rng_, sampler_rng_, stop_rng_;
  std::vector<DistanceFn> metrics_;
  Eigen::MatrixXd dist_;           // pairwise distances of a finite ensemble
  std::vector<Structure> pool_;    // latest posterior batch (continuous case)
  std::size_t cursor_ = 0;
};

}  // namespace

RunRecord run_algorithm(Algorithm alg, const NdbalConfig& cfg, const RunContext& ctx,
                        Posterior& posterior, RngStream& rng) {
  return Runner(alg, cfg, ctx, posterior, rng).run();
}

RunRecord run_ndbal(const NdbalConfig& cfg, const RunContext& ctx, Posterior& posterior,
                    RngStream& rng) {
  return run_algorithm(Algorithm::ndbal, cfg, ctx, posterior, rng);
}

RunRecord run_random_baseline(const NdbalConfig& cfg, const RunContext& ctx, Posterior& posterior,
                              RngStream& rng) {
  return run_algorithm(Algorithm::random, cfg, ctx, posterior, rng);
}

RunRecord run_qbc_baseline(const NdbalConfig& cfg, const RunContext& ctx, Posterior& posterior,
                           RngStream& rng) {
  return run_algorithm(Algorithm::qbc, cfg, ctx, posterior, rng);
}

}  // namespace ndbal
