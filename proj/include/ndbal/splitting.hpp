#pragma once

// Empirical splitting / average-splitting indices and desk-scale checks of the
// index guarantees for rankings and interval clusterings.

#include "ndbal/core.hpp"
#include "ndbal/instances.hpp"

namespace ndbal {

/// Structure pairs at distance above `eps_edge`.
struct EdgeSet {
  std::vector<std::pair<Structure, Structure>> edges;
  double eps_edge = 0.0;

  std::size_t size() const { return edges.size(); }
};

/// All pairs i < j of `structures` with d > eps_edge.
EdgeSet make_edge_set(const std::vector<Structure>& structures, const DistanceFn& d, double eps_edge);

/// 1 - max_y |{(g,g') : g(a) = y = g'(a)}| / |E|. Throws on an empty edge set.
double edge_split(const EdgeSet& e, const Atom& a, const StructureSpace& space);

struct BinomialCI {
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval for `successes` out of `n` (z = 1.96 by default).
BinomialCI wilson_interval(std::size_t successes, std::size_t n, double z = 1.96);

/// tau-hat(rho): fraction of atom draws that rho-average split the ensemble.
struct IndexReport {
  std::vector<double> rho_grid;
  std::vector<double> tau_hat;
  std::vector<BinomialCI> ci;
  std::vector<std::size_t> hits;
  std::size_t n_atoms = 0;    // atom draws pooled over all ensembles
  std::size_t n_pairs = 0;    // structure pairs per ensemble
};

/// 1 / (16 ceil(log2(2 / eps))).
double index_rho_star(double eps);
/// {rho*/2, rho*, 2 rho*, 0.1, 0.25, 0.5}.
std::vector<double> default_rho_grid(double rho_star);

/// Throws DegeneratePosterior when the ensemble has zero average diameter.
IndexReport estimate_avg_split_tau(const StructureSpace& space, const WeightedEnsemble& e,
                                   const DistanceFn& d, const std::vector<double>& rho_grid,
                                   std::size_t n_atoms, RngStream& rng);

struct IndexVerification {
  std::string family;
  std::string ensemble_kind;  // which slice of distributions was probed
  double eps = 0.0;
  double rho_star = 0.0;
  double tau_floor = 0.0;  // claimed lower bound on tau, 0 when unspecified
  IndexReport report;      // pooled over the accepted ensembles
  double tau_star = 0.0;
  BinomialCI tau_star_ci;
  double c_hat = 0.0;  // tau_star / eps
  std::size_t ensembles_used = 0;
  std::size_t ensembles_skipped = 0;  // avg-diam <= eps

  bool ci_excludes_zero() const { return tau_star_ci.lo > 0.0; }
  /// The claim fails outright when even the upper CI bound is below the floor.
  bool floor_violated() const { return tau_star_ci.hi < tau_floor; }
};

struct IndexProbeSettings {
  std::size_t ensemble_size = 64;
  std::size_t atoms_per_ensemble = 200;
};

/// Rankings on S^{d-1} under the closed-form ranking distance. Each trial builds
/// a uniform ensemble over a spherical cap whose spread is tuned so that
/// avg-diam lands in (eps, 2 eps].
IndexVerification verify_ranking_index(Eigen::Index d_dim, double eps, std::size_t n_trials,
                                       RngStream& rng, IndexProbeSettings settings = {});

/// Interval clusterings G_{k,I} under d_I with prior-typical uniform ensembles;
/// the claimed floor is eps * mu(I) / 2.
IndexVerification verify_interval_index(std::size_t k, Interval I, double eps,
                                        std::size_t n_trials, RngStream& rng,
                                        IndexProbeSettings settings = {});

struct SplitProbeRow {
  std::uint64_t atom_id = 0;
  double edge_split = 0.0;
  double average_split = 0.0;
};

/// edge_split and exact average split side by side for `n_atoms` draws.
std::vector<SplitProbeRow> splitting_vs_avg_splitting_probe(const StructureSpace& space,
                                                            const WeightedEnsemble& e,
                                                            const EdgeSet& edges,
                                                            const DistanceFn& d, std::size_t n_atoms,
                                                            RngStream& rng);

}  // namespace ndbal
