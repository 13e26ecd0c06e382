#pragma once

// Noise-tolerant diameter-based active learning: posterior updates, the
// general-loss query score, the main loop and the random / QBC baselines.

#include "ndbal/core.hpp"

#include <limits>

namespace ndbal {

enum class UpdateRule { hard, soft01, general_loss };
enum class Loss { zero_one, logistic };
enum class QueryMode { theory, heuristic };
enum class Algorithm { ndbal, random, qbc };

std::string to_string(UpdateRule r);
std::string to_string(Loss l);
std::string to_string(QueryMode m);
std::string to_string(Algorithm a);
UpdateRule parse_update_rule(const std::string& s);
Loss parse_loss(const std::string& s);
QueryMode parse_query_mode(const std::string& s);
Algorithm parse_algorithm(const std::string& s);

/// log(1 + exp(-z y)).
double logistic_loss(double z, double y);

/// l(g(a), y). The 0-1 loss compares responses; the logistic loss uses the
/// linear margin and needs a LinearMarginSpace with labels in {-1, +1}.
double loss_value(Loss loss, const StructureSpace& space, const Structure& g, const Atom& a,
                  Response y);

// ---------------------------------------------------------------------------
// Posterior updates
// ---------------------------------------------------------------------------

/// Zero weight on structures with g(a) != y. Throws VersionSpaceEmpty when
/// nothing survives.
WeightedEnsemble update_hard(const WeightedEnsemble& e, const Atom& a, Response y,
                             const StructureSpace& space);

/// log w_g -= beta for every g with g(a) != y, then renormalize.
WeightedEnsemble update_soft01(const WeightedEnsemble& e, const Atom& a, Response y, double beta,
                               const StructureSpace& space);

/// log w_g -= beta * l(g(a), y), then renormalize.
WeightedEnsemble update_general_loss(const WeightedEnsemble& e, const Atom& a, Response y,
                                     double beta, Loss loss, const StructureSpace& space);

/// Exact reweighting for ensemble posteriors; continuous posteriors record the
/// (a, y, beta, logistic) term for the sampler's log-density.
void update_general_loss(Posterior& p, const Atom& a, Response y, double beta, Loss loss,
                         const StructureSpace& space);

/// Applies `rule` in place. beta is ignored by the hard rule.
void apply_update(Posterior& p, UpdateRule rule, const Atom& a, Response y, double beta, Loss loss,
                  const StructureSpace& space);

// ---------------------------------------------------------------------------
// Query score
// ---------------------------------------------------------------------------

using StructurePair = std::pair<Structure, Structure>;

/// max_y (1/n) sum d(g,g') exp(-beta (l(g(a),y) + l(g'(a),y))) over the pairs.
/// Lower is better. beta = +inf turns exp(-beta l) into 1[l = 0].
double score_query(const std::vector<StructurePair>& pairs, const Atom& a, double beta, Loss loss,
                   const DistanceFn& d, const StructureSpace& space);

/// Same quantity with the exact sum over a finite ensemble.
double score_query_exact(const WeightedEnsemble& e, const Atom& a, double beta, Loss loss,
                         const DistanceFn& d, const StructureSpace& space);

/// Scores every candidate against consecutive pairs of `samples` and returns
/// the index of the smallest score (lowest index on ties).
std::size_t argmin_score(const std::vector<Structure>& samples, const std::vector<Atom>& atoms,
                         double beta, Loss loss, const DistanceFn& d, const StructureSpace& space,
                         std::vector<double>* scores = nullptr);

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct StopConfig {
  bool enabled = false;
  double eps = 0.1;
  double lambda_prior = 1.0;
};

struct NdbalConfig {
  double beta = 1.0;
  double alpha = 0.5;
  double delta = 0.05;
  std::size_t m_atoms = 500;
  std::size_t n_pairs = 300;
  /// Theory mode only: draw m_t = floor((1/tau) log(4t(t+1)/delta)) atoms.
  std::optional<double> tau;
  UpdateRule update_rule = UpdateRule::general_loss;
  Loss loss = Loss::logistic;
  QueryMode mode = QueryMode::heuristic;
  StopConfig stop;
  std::size_t budget = 150;
  std::size_t select_k_max = 0;  // 0: ceil(50 N)
  std::size_t qbc_attempt_cap = 10000;
  /// Stop once the first metric's exact error reaches this value.
  std::optional<double> target_error;
  /// Enforce the beta <= lambda/10 condition for soft01 against Massart oracles.
  bool theory_checks = false;
};

/// Throws std::invalid_argument on an inconsistent configuration.
void validate(const NdbalConfig& cfg, const Oracle* oracle = nullptr);

/// Atoms drawn in round t under a tau schedule.
std::size_t scheduled_atoms(double tau, std::size_t t, double delta);

struct RunContext {
  const StructureSpace& space;
  const Oracle& oracle;
  const DistanceFn& distance;        // drives selection and diameters
  std::vector<DistanceFn> metrics;   // evaluation distances; empty = {distance}
  Structure target;                  // g*
};

struct RoundLog {
  std::size_t round = 0;  // 0 is the prior snapshot
  bool queried = false;
  std::uint64_t atom_id = 0;
  Response response = 0;
  std::vector<double> errors;  // one per metric
  double diameter = 0.0;
  std::size_t atoms_drawn = 0;         // m_t
  std::size_t structures_sampled = 0;  // n_t
  bool select_timeout = false;
  /// Exact average split of the queried atom w.r.t. the previous posterior,
  /// NaN when unavailable.
  double measured_split = std::numeric_limits<double>::quiet_NaN();
};

/// Round-by-round log. Snapshot t is the prior replayed through the first t
/// (atom, response) pairs.
struct RunRecord {
  std::string algorithm;
  std::vector<std::string> metric_names;
  std::vector<RoundLog> rounds;
  std::string stop_reason = "budget";

  std::size_t query_count() const;
  std::size_t round_count() const { return rounds.empty() ? 0 : rounds.size() - 1; }
};

RunRecord run_ndbal(const NdbalConfig& cfg, const RunContext& ctx, Posterior& posterior,
                    RngStream& rng);
RunRecord run_random_baseline(const NdbalConfig& cfg, const RunContext& ctx, Posterior& posterior,
                              RngStream& rng);
RunRecord run_qbc_baseline(const NdbalConfig& cfg, const RunContext& ctx, Posterior& posterior,
                           RngStream& rng);
RunRecord run_algorithm(Algorithm alg, const NdbalConfig& cfg, const RunContext& ctx,
                        Posterior& posterior, RngStream& rng);

}  // namespace ndbal
