#pragma once

// Exact-expectation checks of the posterior guarantees on random finite
// instances. Expectations over the response are summed, not sampled.

#include "ndbal/instances.hpp"

#include <limits>

namespace ndbal {

/// Random finite instance: response tables, Dirichlet(1) prior, a random
/// symmetric distance table in [0, 1] and a Massart oracle around g*.
struct FiniteInstance {
  std::shared_ptr<const FiniteLabeledSpace> space;
  WeightedEnsemble prior;
  Eigen::MatrixXd distances;
  DistanceFn distance;
  std::size_t target = 0;
  double lambda = 1.0;
  std::shared_ptr<const Oracle> oracle;
};

struct InstanceShape {
  std::size_t max_structures = 32;
  std::size_t max_atoms = 12;
  std::size_t max_labels = 3;
};

FiniteInstance random_finite_instance(RngStream& rng, InstanceShape shape = {});

struct CheckSummary {
  std::string name;
  std::size_t cases = 0;
  std::size_t violations = 0;
  /// Largest (lhs - rhs) / max(1, |rhs|) seen; negative when every case had slack.
  double worst_excess = -std::numeric_limits<double>::infinity();
  double tolerance = 1e-9;

  bool passed() const { return cases > 0 && violations == 0; }
  void record(double lhs, double rhs);
};

/// E_{g~pi}[d(g, g*)] <= avg-diam(pi) / pi(g*).
CheckSummary check_distance_bound(std::size_t instances, RngStream& rng, double tol = 1e-9);

/// E_y[1 / pi_t(g*)^k] <= 1 / pi_{t-1}(g*)^k under the soft 0-1 update with
/// beta = lambda / k, for k in {1, 2} and every atom.
CheckSummary check_inverse_mass_supermartingale(std::size_t instances, RngStream& rng,
                                                double tol = 1e-9);

/// E_y[avg-diam(pi_t) / pi_t(g*)^2] <= (1 - rho lambda beta / 2) avg-diam(pi) / pi(g*)^2
/// with beta = lambda / 10 and rho the exact average split of each atom.
CheckSummary check_potential_drop(std::size_t instances, RngStream& rng, double tol = 1e-9);

}  // namespace ndbal
