#pragma once

// Average diameter E_{g,g'~pi}[d(g,g')], distance-to-target, and the
// diameter-based stopping rule.

#include "ndbal/core.hpp"

namespace ndbal {

using DiamEstimate = MeanEstimate;

/// Finite ensembles up to this size get exact O(|G|^2) diameters.
inline constexpr std::size_t kExactDiameterLimit = 2000;

/// sum_{i,j} w_i w_j d(g_i, g_j) over a normalized ensemble.
double avg_diam_exact(const WeightedEnsemble& e, const DistanceFn& d);

/// Mean of d over consecutive pairs (s[0], s[1]), (s[2], s[3]), ...
DiamEstimate avg_diam_from_samples(const std::vector<Structure>& samples, const DistanceFn& d);

/// Mean of d over `n_pairs` pairs drawn from the posterior.
DiamEstimate avg_diam_mc(Posterior& p, const DistanceFn& d, std::size_t n_pairs, RngStream& rng);

/// Exact when the posterior is a finite ensemble of at most kExactDiameterLimit
/// structures (std_err 0), Monte Carlo otherwise.
DiamEstimate avg_diam(Posterior& p, const DistanceFn& d, std::size_t n_pairs, RngStream& rng);

/// E_{g~pi}[d(g, g*)] for a normalized ensemble.
double avg_dist_to_target_exact(const WeightedEnsemble& e, const Structure& g_star,
                                const DistanceFn& d);

/// (1/n) sum_i d(g_i, g*) over posterior draws.
MeanEstimate avg_dist_to_target(Posterior& p, const Structure& g_star, const DistanceFn& d,
                                std::size_t n, RngStream& rng);

MeanEstimate avg_dist_from_samples(const std::vector<Structure>& samples, const Structure& g_star,
                                   const DistanceFn& d);

/// n_t = ceil((48 lambda^2 / eps) * log(t (t + 1) / delta)).
std::size_t stopping_pairs(double eps, double lambda_prior, std::size_t t, double delta);

/// 3 eps / (4 lambda^2).
double stopping_threshold(double eps, double lambda_prior);

struct StopDecision {
  bool stop = false;
  double mean_distance = 0.0;
  std::size_t pairs = 0;
};

/// Draws stopping_pairs(...) pairs and stops iff their mean distance is at most
/// stopping_threshold(...).
StopDecision stopping_check(Posterior& p, double eps, double lambda_prior, std::size_t t,
                            double delta, const DistanceFn& d, RngStream& rng);

}  // namespace ndbal
