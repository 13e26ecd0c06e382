#pragma once

// Structure sampling: exact draws from finite ensembles and MALA chains for
// log-concave posteriors over weight vectors.

#include "ndbal/core.hpp"

#include <deque>

namespace ndbal {

/// Structure i with probability exp(log_weights[i]). Expects a normalized ensemble.
Structure sample_finite(const WeightedEnsemble& e, RngStream& rng);

/// Posterior backed by an exact finite ensemble.
class EnsemblePosterior final : public Posterior {
 public:
  explicit EnsemblePosterior(WeightedEnsemble e);

  std::vector<Structure> sample(std::size_t n, RngStream& rng) override;
  const WeightedEnsemble* ensemble() const override { return &ensemble_; }

  void reset(WeightedEnsemble e);

 private:
  WeightedEnsemble ensemble_;
  std::vector<double> cdf_;
};

// ---------------------------------------------------------------------------
// MALA
// ---------------------------------------------------------------------------

/// Log-density f of the target (pi ∝ exp f). `eval` returns f(w) and writes
/// grad f(w) into `grad` when it is non-null.
struct LogTarget {
  std::function<double(const Eigen::VectorXd& w, Eigen::VectorXd* grad)> eval;

  double log_density(const Eigen::VectorXd& w) const { return eval(w, nullptr); }
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const {
    Eigen::VectorXd g;
    eval(w, &g);
    return g;
  }
};

struct MalaChain {
  Eigen::VectorXd state;
  double step = 1.0;  // eta
  std::size_t burn_in = 1000;
  std::size_t thinning = 5;
  std::size_t window_size = 50;
  std::size_t adapt_every = 10;
  std::deque<bool> window;  // most recent accept bits, newest at the back

  // Cached f and grad f at `state`; refreshed whenever the target changes.
  double state_log_density = 0.0;
  Eigen::VectorXd state_gradient;

  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t nonfinite_rejects = 0;

  double window_acceptance() const;
  void record(bool accepted_step);
  /// Recompute the cached density and gradient at the current state.
  void refresh(const LogTarget& target);
};

/// Metropolis acceptance probability for a move from `from` to `to`.
/// Returns 0 when f is not finite at `to`.
double mala_accept_probability(const Eigen::VectorXd& from, double f_from,
                               const Eigen::VectorXd& grad_from, const Eigen::VectorXd& to,
                               double f_to,
                               const Eigen::VectorXd& grad_to, double step);

/// One Langevin proposal plus Metropolis correction. Returns whether the
/// proposal was accepted.
bool mala_step(MalaChain& chain, const LogTarget& target, RngStream& rng);

/// Windowed step-size control: x1.1 above 0.7 acceptance, x0.9 below 0.5.
void adapt_step(MalaChain& chain);

/// Runs `burn_in` adaptive steps, then returns `n` states spaced `thinning`
/// apart with the step frozen at the geometric mean of the steps adapted in
/// the second half of burn-in.
std::vector<Eigen::VectorXd> run_chain(MalaChain& chain, const LogTarget& target, std::size_t n,
                                       RngStream& rng);

// ---------------------------------------------------------------------------
// Continuous posterior for linear-margin spaces
// ---------------------------------------------------------------------------

struct MalaSettings {
  std::size_t burn_in = 1000;
  std::size_t thinning = 5;
  std::size_t window_size = 50;
  std::size_t adapt_every = 10;
  /// Initial eta; <= 0 selects sigma^2 / dim.
  double initial_step = 0.0;
};

/// N(0, sigma^2 I) prior times exp(-beta * logistic_loss(<w, x_i>, y_i)) terms,
/// sampled with a warm-started MALA chain.
class ContinuousPosterior final : public Posterior {
 public:
  ContinuousPosterior(Eigen::Index dim, double sigma, MalaSettings settings = {});

  std::vector<Structure> sample(std::size_t n, RngStream& rng) override;

  /// Appends the factor exp(-beta * log(1 + exp(-y <w, x>))).
  void add_term(const Eigen::VectorXd& x, double y, double beta);

  /// f(w) = -sum_i beta_i * log(1 + exp(-y_i <w, x_i>)) - |w|^2 / (2 sigma^2).
  double evaluate(const Eigen::VectorXd& w, Eigen::VectorXd* grad) const;
  double log_density(const Eigen::VectorXd& w) const { return evaluate(w, nullptr); }
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const;
  LogTarget target() const;

  Eigen::Index dimension() const { return dim_; }
  double sigma() const { return sigma_; }
  std::size_t term_count() const { return static_cast<std::size_t>(n_terms_); }
  const MalaChain& chain() const { return chain_; }
  MalaChain& chain() { return chain_; }

 private:
  Eigen::Index dim_;
  double sigma_;
  Eigen::MatrixXd features_;  // rows [0, n_terms_) are live
  Eigen::VectorXd labels_;
  Eigen::VectorXd betas_;
  mutable Eigen::ArrayXd scratch_a_, scratch_e_;  // evaluate() work space
  Eigen::Index n_terms_ = 0;
  MalaChain chain_;
  bool chain_stale_ = true;
};

}  // namespace ndbal
