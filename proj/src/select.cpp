#include "ndbal/select.hpp"

#include "ndbal/diameter.hpp"

#include <cmath>
#include <limits>

namespace ndbal {

double threshold_n(double alpha, double delta, std::size_t m, std::size_t y_count) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("select: alpha must lie in (0, 1)");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("select: delta must lie in (0, 1)");
  if (m < 1) throw std::invalid_argument("select: need at least one candidate atom");
  return 6.0 * (2.0 + alpha) / (alpha * alpha) *
         std::log(static_cast<double>(m + y_count) / delta);
}

SplitTally::SplitTally(std::size_t atoms, std::size_t responses, double threshold)
    : cells_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(atoms), static_cast<Eigen::Index>(responses))),
      threshold_(threshold) {}

void SplitTally::add_pair(double distance, const std::vector<std::size_t>& resp_g,
                          const std::vector<std::size_t>& resp_h) {
  ++rounds_;
  if (distance == 0.0) return;
  for (Eigen::Index i = 0; i < cells_.rows(); ++i) {
    const std::size_t yg = resp_g[static_cast<std::size_t>(i)];
    const bool agree = yg == resp_h[static_cast<std::size_t>(i)];
    for (Eigen::Index y = 0; y < cells_.cols(); ++y)
      if (!agree || static_cast<std::size_t>(y) != yg) cells_(i, y) += distance;
  }
}

std::optional<std::size_t> SplitTally::qualifying() const {
  for (Eigen::Index i = 0; i < cells_.rows(); ++i)
    if (cells_.row(i).minCoeff() >= threshold_) return static_cast<std::size_t>(i);
  return std::nullopt;
}

std::size_t SplitTally::best() const {
  std::size_t best = 0;
  double best_value = -1.0;
  for (Eigen::Index i = 0; i < cells_.rows(); ++i) {
    const double v = cells_.row(i).minCoeff();
    if (v > best_value) {
      best_value = v;
      best = static_cast<std::size_t>(i);
    }
  }
  return best;
}

SelectResult select(Posterior& p, const std::vector<Atom>& atoms, double alpha, double delta,
                    const DistanceFn& d, const StructureSpace& space, std::size_t k_max,
                    RngStream& rng) {
  if (atoms.empty()) throw std::invalid_argument("select: no candidate atoms");
  const ResponseSet& ys = space.responses();
  const double n_threshold = threshold_n(alpha, delta, atoms.size(), ys.size());
  if (k_max == 0) k_max = static_cast<std::size_t>(std::ceil(50.0 * n_threshold));

  SplitTally tally(atoms.size(), ys.size(), n_threshold);
  SelectResult result;
  result.threshold = n_threshold;

  auto responses_of = [&](const Structure& g) {
    std::vector<std::size_t> r(atoms.size());
    for (std::size_t i = 0; i < atoms.size(); ++i) r[i] = ys.index_of(space.evaluate(g, atoms[i]));
    return r;
  };

  constexpr std::size_t kBatchPairs = 128;
  while (tally.rounds() < k_max) {
    const std::size_t want = std::min(kBatchPairs, k_max - tally.rounds());
    const std::vector<Structure> batch = p.sample(2 * want, rng);
    result.structures_sampled += batch.size();
    for (std::size_t b = 0; b + 1 < batch.size(); b += 2) {
      const double dist = d(batch[b], batch[b + 1]);
      if (dist == 0.0) {
        tally.add_pair(0.0, {}, {});
      } else {
        tally.add_pair(dist, responses_of(batch[b]), responses_of(batch[b + 1]));
        if (auto hit = tally.qualifying()) {
          result.index = *hit;
          result.rounds = tally.rounds();
          return result;
        }
      }
    }
  }
  throw SelectTimeout(tally.best(), tally.rounds());
}

Eigen::VectorXd split_terms(const WeightedEnsemble& e, const Atom& a, const DistanceFn& d,
                            const StructureSpace& space) {
  const ResponseSet& ys = space.responses();
  const Eigen::VectorXd w = e.probabilities();
  std::vector<std::size_t> resp(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) resp[i] = ys.index_of(space.evaluate(e.structures[i], a));

  Eigen::VectorXd terms = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double wi = w[static_cast<Eigen::Index>(i)];
    if (wi == 0.0) continue;
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      const double wj = w[static_cast<Eigen::Index>(j)];
      if (wj == 0.0 || resp[i] != resp[j]) continue;
      terms[static_cast<Eigen::Index>(resp[i])] += 2.0 * wi * wj * d(e.structures[i], e.structures[j]);
    }
  }
  return terms;
}

Eigen::MatrixXd pairwise_distances(const std::vector<Structure>& structures, const DistanceFn& d) {
  const auto n = static_cast<Eigen::Index>(structures.size());
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      D(i, j) = D(j, i) = d(structures[static_cast<std::size_t>(i)], structures[static_cast<std::size_t>(j)]);
  return D;
}

double average_split(const Eigen::VectorXd& w, const Eigen::MatrixXd& D,
                     const std::vector<std::size_t>& responses, std::size_t response_count) {
  const double diam = w.dot(D * w);
  if (!(diam > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  double worst = 0.0;
  for (std::size_t y = 0; y < response_count; ++y) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(w.size());
    for (std::size_t i = 0; i < responses.size(); ++i)
      if (responses[i] == y) v[static_cast<Eigen::Index>(i)] = w[static_cast<Eigen::Index>(i)];
    worst = std::max(worst, v.dot(D * v));
  }
  return 1.0 - worst / diam;
}

double exact_average_split(const WeightedEnsemble& e, const Atom& a, const DistanceFn& d,
                           const StructureSpace& space) {
  const double diam = avg_diam_exact(e, d);
  if (!(diam > 0.0)) throw DegeneratePosterior("exact_average_split: posterior has zero diameter");
  return 1.0 - split_terms(e, a, d, space).maxCoeff() / diam;
}

}  // namespace ndbal
