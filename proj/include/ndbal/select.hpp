#pragma once

// Inverse-sampling query selection and the exact average-split oracle.

#include "ndbal/core.hpp"

namespace ndbal {

/// N = 6(2 + alpha) / alpha^2 * ln((m + |Y|) / delta).
double threshold_n(double alpha, double delta, std::size_t m, std::size_t y_count);

/// Per-(atom, response) accumulators S^{a,y}. Each drawn pair (g, g') adds
/// d(g,g') to every cell except the one where g(a) = y = g'(a).
class SplitTally {
 public:
  SplitTally(std::size_t atoms, std::size_t responses, double threshold);

  /// `resp_g[i]`, `resp_h[i]` are response indices of the two structures on atom i.
  void add_pair(double distance, const std::vector<std::size_t>& resp_g,
                const std::vector<std::size_t>& resp_h);

  double cell(std::size_t atom, std::size_t response) const {
    return cells_(static_cast<Eigen::Index>(atom), static_cast<Eigen::Index>(response));
  }
  double min_cell(std::size_t atom) const { return cells_.row(static_cast<Eigen::Index>(atom)).minCoeff(); }
  /// Lowest-index atom whose every cell has reached the threshold.
  std::optional<std::size_t> qualifying() const;
  /// Atom with the largest min_y S (lowest index on ties).
  std::size_t best() const;

  std::size_t rounds() const { return rounds_; }
  double threshold() const { return threshold_; }
  const Eigen::MatrixXd& cells() const { return cells_; }

 private:
  Eigen::MatrixXd cells_;
  double threshold_;
  std::size_t rounds_ = 0;
};

struct SelectResult {
  std::size_t index = 0;   // into the candidate list
  std::size_t rounds = 0;  // pairs consumed (K)
  std::size_t structures_sampled = 0;
  double threshold = 0.0;
};

/// Draws pairs from `p` until some candidate's tally clears N in every
/// response cell and returns it (lowest index on same-round ties). After
/// `k_max` rounds (0 = ceil(50 N)) throws SelectTimeout carrying the best
/// candidate so far.
SelectResult select(Posterior& p, const std::vector<Atom>& atoms, double alpha, double delta,
                    const DistanceFn& d, const StructureSpace& space, std::size_t k_max,
                    RngStream& rng);

/// pi(G_a^y)^2 avg-diam(pi | G_a^y) = sum_{g,g' in G_a^y} w_g w_g' d(g,g'), one
/// entry per response in space order.
Eigen::VectorXd split_terms(const WeightedEnsemble& e, const Atom& a, const DistanceFn& d,
                            const StructureSpace& space);

/// Symmetric matrix of d over every pair of `structures`.
Eigen::MatrixXd pairwise_distances(const std::vector<Structure>& structures, const DistanceFn& d);

/// Average split from precomputed pieces: probabilities `w`, distance matrix
/// `D` and each structure's response index on the atom. NaN when w'Dw = 0.
double average_split(const Eigen::VectorXd& w, const Eigen::MatrixXd& D,
                     const std::vector<std::size_t>& responses, std::size_t response_count);

/// Largest rho with max_y pi(G_a^y)^2 avg-diam(pi|G_a^y) <= (1 - rho) avg-diam(pi).
/// Throws DegeneratePosterior when avg-diam is 0.
double exact_average_split(const WeightedEnsemble& e, const Atom& a, const DistanceFn& d,
                           const StructureSpace& space);

}  // namespace ndbal
