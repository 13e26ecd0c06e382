#include "ndbal/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ndbal {

Structure sample_finite(const WeightedEnsemble& e, RngStream& rng) {
  if (e.size() == 0) throw EmptyPosterior("cannot sample from an empty ensemble");
  double u = rng.uniform();
  std::size_t last_live = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double w = std::exp(e.log_weights[static_cast<Eigen::Index>(i)]);
    if (w > 0) last_live = i;
    if (u < w) return e.structures[i];
    u -= w;
  }
  return e.structures[last_live];
}

EnsemblePosterior::EnsemblePosterior(WeightedEnsemble e) { reset(std::move(e)); }

void EnsemblePosterior::reset(WeightedEnsemble e) {
  ensemble_ = normalize(std::move(e));
  cdf_.resize(ensemble_.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < ensemble_.size(); ++i) {
    acc += std::exp(ensemble_.log_weights[static_cast<Eigen::Index>(i)]);
    cdf_[i] = acc;
  }
}

std::vector<Structure> EnsemblePosterior::sample(std::size_t n, RngStream& rng) {
  std::vector<Structure> out;
  out.reserve(n);
  const double total = cdf_.back();
  for (std::size_t k = 0; k < n; ++k) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()),
                                          cdf_.size() - 1);
    // Skip zero-mass entries that upper_bound can land on at the tail.
    while (i > 0 && ensemble_.log_weights[static_cast<Eigen::Index>(i)] ==
                        -std::numeric_limits<double>::infinity())
      --i;
    out.push_back(ensemble_.structures[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------

double MalaChain::window_acceptance() const {
  if (window.empty()) return 0.0;
  return static_cast<double>(std::count(window.begin(), window.end(), true)) /
         static_cast<double>(window.size());
}

void MalaChain::record(bool accepted_step) {
  window.push_back(accepted_step);
  while (window.size() > window_size) window.pop_front();
  if (accepted_step)
    ++accepted;
  else
    ++rejected;
}

void MalaChain::refresh(const LogTarget& target) {
  state_log_density = target.eval(state, &state_gradient);
}

double mala_accept_probability(const Eigen::VectorXd& from, double f_from,
                               const Eigen::VectorXd& grad_from, const Eigen::VectorXd& to,
                               double f_to, const Eigen::VectorXd& grad_to, double step) {
  if (!std::isfinite(f_to)) return 0.0;
  // log q(from | to) - log q(to | from) for the N(w + eta grad f(w), 2 eta I) kernel.
  const double forward = (to - from - step * grad_from).squaredNorm();
  const double backward = (from - to - step * grad_to).squaredNorm();
  const double log_ratio = f_to - f_from + (forward - backward) / (4.0 * step);
  if (log_ratio >= 0) return 1.0;
  return std::exp(log_ratio);
}

bool mala_step(MalaChain& chain, const LogTarget& target, RngStream& rng) {
  const Eigen::Index dim = chain.state.size();
  Eigen::VectorXd proposal = chain.state + chain.step * chain.state_gradient +
                             std::sqrt(2.0 * chain.step) * rng.normal_vector(dim);
  Eigen::VectorXd grad_proposal;
  const double f_proposal = target.eval(proposal, &grad_proposal);
  if (!std::isfinite(f_proposal) || !grad_proposal.allFinite()) {
    ++chain.nonfinite_rejects;
    chain.record(false);
    return false;
  }
  const double alpha =
      mala_accept_probability(chain.state, chain.state_log_density, chain.state_gradient,
                              proposal, f_proposal, grad_proposal, chain.step);
  const bool accept = rng.uniform() < alpha;
  if (accept) {
    chain.state = std::move(proposal);
    chain.state_log_density = f_proposal;
    chain.state_gradient = std::move(grad_proposal);
  }
  chain.record(accept);
  return accept;
}

void adapt_step(MalaChain& chain) {
  if (chain.window.empty()) return;
  const double rate = chain.window_acceptance();
  if (rate > 0.7)
    chain.step *= 1.1;
  else if (rate < 0.5)
    chain.step *= 0.9;
}

std::vector<Eigen::VectorXd> run_chain(MalaChain& chain, const LogTarget& target, std::size_t n,
                                       RngStream& rng) {
  // The step frozen after burn-in is the geometric mean of the adapted steps
  // over the second half of burn-in: the last iterate alone rides the noise of
  // a single acceptance window.
  double log_step_sum = 0.0;
  std::size_t log_step_count = 0;
  for (std::size_t i = 0; i < chain.burn_in; ++i) {
    mala_step(chain, target, rng);
    if (chain.adapt_every > 0 && (i + 1) % chain.adapt_every == 0) {
      adapt_step(chain);
      if (2 * i >= chain.burn_in) {
        log_step_sum += std::log(chain.step);
        ++log_step_count;
      }
    }
  }
  if (log_step_count > 0) chain.step = std::exp(log_step_sum / static_cast<double>(log_step_count));
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  const std::size_t thin = std::max<std::size_t>(chain.thinning, 1);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < thin; ++j) mala_step(chain, target, rng);
    out.push_back(chain.state);
  }
  return out;
}

// ---------------------------------------------------------------------------

ContinuousPosterior::ContinuousPosterior(Eigen::Index dim, double sigma, MalaSettings settings)
    : dim_(dim), sigma_(sigma) {
  if (dim < 1) throw std::invalid_argument("continuous posterior: dimension must be >= 1");
  if (!(sigma > 0)) throw std::invalid_argument("continuous posterior: sigma must be > 0");
  features_.resize(16, dim);
  labels_.resize(16);
  betas_.resize(16);
  chain_.state = Eigen::VectorXd::Zero(dim);
  chain_.step = settings.initial_step > 0 ? settings.initial_step
                                          : sigma * sigma / static_cast<double>(dim);
  chain_.burn_in = settings.burn_in;
  chain_.thinning = settings.thinning;
  chain_.window_size = settings.window_size;
  chain_.adapt_every = settings.adapt_every;
}

void ContinuousPosterior::add_term(const Eigen::VectorXd& x, double y, double beta) {
  if (x.size() != dim_) throw IncompatibleAtom("continuous posterior: feature dimension mismatch");
  if (n_terms_ == features_.rows()) {
    const Eigen::Index cap = 2 * features_.rows();
    features_.conservativeResize(cap, Eigen::NoChange);
    labels_.conservativeResize(cap);
    betas_.conservativeResize(cap);
  }
  features_.row(n_terms_) = x.transpose();
  labels_[n_terms_] = y;
  betas_[n_terms_] = beta;
  ++n_terms_;
  chain_stale_ = true;
}

double ContinuousPosterior::evaluate(const Eigen::VectorXd& w, Eigen::VectorXd* grad) const {
  const double inv_var = 1.0 / (sigma_ * sigma_);
  double f = -0.5 * inv_var * w.squaredNorm();
  if (grad) *grad = -inv_var * w;
  if (n_terms_ == 0) return f;

  const auto X = features_.topRows(n_terms_);
  const auto y = labels_.head(n_terms_).array();
  const auto betas = betas_.head(n_terms_).array();
  // a = -y <w, x>; softplus(a) = max(a, 0) + log(1 + exp(-|a|)), and sigmoid(a)
  // shares the same exp(-|a|). The packet log of 1 + e is within ~1e-16 of log1p.
  Eigen::ArrayXd& a = scratch_a_;
  Eigen::ArrayXd& e = scratch_e_;
  a.resize(n_terms_);
  a.matrix().noalias() = X * w;
  a *= -y;
  e = (-a.abs()).exp();
  f -= (betas * (a.max(0.0) + (1.0 + e).log())).sum();
  if (!grad) return f;
  // d/dw of -beta * log(1 + exp(-y z)) = beta * y * sigmoid(-y z) * x
  e = betas * y * (a >= 0.0).select(1.0, e) / (1.0 + e);
  grad->noalias() += X.transpose() * e.matrix();
  return f;
}

Eigen::VectorXd ContinuousPosterior::gradient(const Eigen::VectorXd& w) const {
  Eigen::VectorXd g;
  evaluate(w, &g);
  return g;
}

LogTarget ContinuousPosterior::target() const {
  return LogTarget{[this](const Eigen::VectorXd& w, Eigen::VectorXd* g) { return evaluate(w, g); }};
}

std::vector<Structure> ContinuousPosterior::sample(std::size_t n, RngStream& rng) {
  const LogTarget t = target();
  if (chain_stale_) {
    chain_.refresh(t);
    chain_stale_ = false;
  }
  std::vector<Eigen::VectorXd> states = run_chain(chain_, t, n, rng);
  std::vector<Structure> out;
  out.reserve(states.size());
  for (auto& s : states) out.push_back(Structure{std::move(s), -1});
  return out;
}

}  // namespace ndbal
