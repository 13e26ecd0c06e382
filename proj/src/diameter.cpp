#include "ndbal/diameter.hpp"

#include <cmath>

namespace ndbal {

double avg_diam_exact(const WeightedEnsemble& e, const DistanceFn& d) {
  const Eigen::VectorXd w = e.probabilities();
  double total = 0.0;
  const auto n = static_cast<Eigen::Index>(e.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w[i] == 0.0) continue;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (w[j] == 0.0) continue;
      total += 2.0 * w[i] * w[j] *
               d(e.structures[static_cast<std::size_t>(i)], e.structures[static_cast<std::size_t>(j)]);
    }
  }
  return total;
}

DiamEstimate avg_diam_from_samples(const std::vector<Structure>& samples, const DistanceFn& d) {
  std::vector<double> ds;
  ds.reserve(samples.size() / 2);
  for (std::size_t i = 0; i + 1 < samples.size(); i += 2) ds.push_back(d(samples[i], samples[i + 1]));
  return mean_estimate(ds);
}

DiamEstimate avg_diam_mc(Posterior& p, const DistanceFn& d, std::size_t n_pairs, RngStream& rng) {
  if (n_pairs == 0) throw std::invalid_argument("avg_diam_mc: n_pairs must be >= 1");
  return avg_diam_from_samples(p.sample(2 * n_pairs, rng), d);
}

DiamEstimate avg_diam(Posterior& p, const DistanceFn& d, std::size_t n_pairs, RngStream& rng) {
  if (const WeightedEnsemble* e = p.ensemble(); e && e->size() <= kExactDiameterLimit)
    return DiamEstimate{avg_diam_exact(*e, d), e->size() * e->size(), 0.0};
  return avg_diam_mc(p, d, n_pairs, rng);
}

double avg_dist_to_target_exact(const WeightedEnsemble& e, const Structure& g_star,
                                const DistanceFn& d) {
  const Eigen::VectorXd w = e.probabilities();
  double total = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double wi = w[static_cast<Eigen::Index>(i)];
    if (wi > 0.0) total += wi * d(e.structures[i], g_star);
  }
  return total;
}

MeanEstimate avg_dist_from_samples(const std::vector<Structure>& samples, const Structure& g_star,
                                   const DistanceFn& d) {
  std::vector<double> ds;
  ds.reserve(samples.size());
  for (const auto& g : samples) ds.push_back(d(g, g_star));
  return mean_estimate(ds);
}

MeanEstimate avg_dist_to_target(Posterior& p, const Structure& g_star, const DistanceFn& d,
                                std::size_t n, RngStream& rng) {
  if (n == 0) throw std::invalid_argument("avg_dist_to_target: n must be >= 1");
  return avg_dist_from_samples(p.sample(n, rng), g_star, d);
}

std::size_t stopping_pairs(double eps, double lambda_prior, std::size_t t, double delta) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("stopping rule: eps must lie in (0, 1)");
  if (!(lambda_prior >= 1.0)) throw std::invalid_argument("stopping rule: lambda must be >= 1");
  if (t < 1) throw std::invalid_argument("stopping rule: t must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("stopping rule: delta must lie in (0, 1)");
  const double tt = static_cast<double>(t);
  const double n = 48.0 * lambda_prior * lambda_prior / eps * std::log(tt * (tt + 1.0) / delta);
  return static_cast<std::size_t>(std::ceil(n));
}

double stopping_threshold(double eps, double lambda_prior) {
  return 3.0 * eps / (4.0 * lambda_prior * lambda_prior);
}

StopDecision stopping_check(Posterior& p, double eps, double lambda_prior, std::size_t t,
                            double delta, const DistanceFn& d, RngStream& rng) {
  StopDecision out;
  out.pairs = stopping_pairs(eps, lambda_prior, t, delta);
  out.mean_distance = avg_diam_mc(p, d, out.pairs, rng).value;
  out.stop = out.mean_distance <= stopping_threshold(eps, lambda_prior);
  return out;
}

}  // namespace ndbal
