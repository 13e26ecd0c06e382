#include "ndbal/checks.hpp"

#include "ndbal/ndbal.hpp"
#include "ndbal/select.hpp"

#include <cmath>
#include <numeric>

namespace ndbal {

namespace {

std::size_t between(RngStream& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

double potential(const WeightedEnsemble& e, const Eigen::MatrixXd& D, std::size_t target, int k) {
  const Eigen::VectorXd w = e.probabilities();
  const double diam = w.dot(D * w);
  const double p = w[static_cast<Eigen::Index>(target)];
  return k == 0 ? diam / (p * p) : 1.0 / std::pow(p, k);
}

}  // namespace

void CheckSummary::record(double lhs, double rhs) {
  ++cases;
  const double excess = (lhs - rhs) / std::max(1.0, std::abs(rhs));
  worst_excess = std::max(worst_excess, excess);
  if (excess > tolerance) ++violations;
}

FiniteInstance random_finite_instance(RngStream& rng, InstanceShape shape) {
  const std::size_t n_g = between(rng, 2, shape.max_structures);
  const std::size_t n_a = between(rng, 1, shape.max_atoms);
  const std::size_t n_y = between(rng, 2, shape.max_labels);

  std::vector<Response> labels(n_y);
  std::iota(labels.begin(), labels.end(), 0);
  Eigen::MatrixXi tables(static_cast<Eigen::Index>(n_g), static_cast<Eigen::Index>(n_a));
  for (Eigen::Index r = 0; r < tables.rows(); ++r)
    for (Eigen::Index c = 0; c < tables.cols(); ++c) tables(r, c) = static_cast<int>(rng.index(n_y));

  FiniteInstance inst;
  auto space = std::make_shared<const FiniteLabeledSpace>(ResponseSet(labels), tables);
  inst.space = space;

  Eigen::VectorXd logw(static_cast<Eigen::Index>(n_g));
  for (Eigen::Index i = 0; i < logw.size(); ++i) logw[i] = std::log(-std::log(1.0 - rng.uniform()));
  inst.prior = normalize(WeightedEnsemble{space->structures(), logw});

  inst.distances = Eigen::MatrixXd::Zero(logw.size(), logw.size());
  for (Eigen::Index i = 0; i < logw.size(); ++i)
    for (Eigen::Index j = i + 1; j < logw.size(); ++j)
      inst.distances(i, j) = inst.distances(j, i) = rng.uniform();
  inst.distance = table_distance(inst.distances);

  inst.target = rng.index(n_g);
  inst.lambda = 0.05 + 0.95 * rng.uniform();
  inst.oracle = std::make_shared<const Oracle>(
      massart_oracle(space, space->structures()[inst.target], inst.lambda));
  return inst;
}

CheckSummary check_distance_bound(std::size_t instances, RngStream& rng, double tol) {
  CheckSummary s;
  s.name = "distance-to-target bound";
  s.tolerance = tol;
  for (std::size_t n = 0; n < instances; ++n) {
    const FiniteInstance inst = random_finite_instance(rng);
    const Eigen::VectorXd w = inst.prior.probabilities();
    const auto t = static_cast<Eigen::Index>(inst.target);
    const double lhs = w.dot(inst.distances.col(t));
    const double rhs = w.dot(inst.distances * w) / w[t];
    s.record(lhs, rhs);
  }
  return s;
}

CheckSummary check_inverse_mass_supermartingale(std::size_t instances, RngStream& rng, double tol) {
  CheckSummary s;
  s.name = "inverse target mass supermartingale";
  s.tolerance = tol;
  for (std::size_t n = 0; n < instances; ++n) {
    const FiniteInstance inst = random_finite_instance(rng);
    const ResponseSet& ys = inst.space->responses();
    for (int k = 1; k <= 2; ++k) {
      const double beta = inst.lambda / k;
      const double before = potential(inst.prior, inst.distances, inst.target, k);
      for (std::size_t i = 0; i < inst.space->atom_count(); ++i) {
        const Atom a = inst.space->atom(i);
        const Eigen::VectorXd eta = inst.oracle->law(a);
        double after = 0.0;
        for (std::size_t y = 0; y < ys.size(); ++y) {
          const WeightedEnsemble next = update_soft01(inst.prior, a, ys[y], beta, *inst.space);
          after += eta[static_cast<Eigen::Index>(y)] * potential(next, inst.distances, inst.target, k);
        }
        s.record(after, before);
      }
    }
  }
  return s;
}

CheckSummary check_potential_drop(std::size_t instances, RngStream& rng, double tol) {
  CheckSummary s;
  s.name = "diameter potential drop";
  s.tolerance = tol;
  for (std::size_t n = 0; n < instances; ++n) {
    const FiniteInstance inst = random_finite_instance(rng);
    const ResponseSet& ys = inst.space->responses();
    const double beta = inst.lambda / 10.0;
    const double before = potential(inst.prior, inst.distances, inst.target, 0);
    const Eigen::VectorXd w = inst.prior.probabilities();
    for (std::size_t i = 0; i < inst.space->atom_count(); ++i) {
      const Atom a = inst.space->atom(i);
      std::vector<std::size_t> resp(inst.prior.size());
      for (std::size_t g = 0; g < resp.size(); ++g)
        resp[g] = ys.index_of(inst.space->evaluate(inst.prior.structures[g], a));
      const double rho = average_split(w, inst.distances, resp, ys.size());
      if (std::isnan(rho)) continue;
      const Eigen::VectorXd eta = inst.oracle->law(a);
      double after = 0.0;
      for (std::size_t y = 0; y < ys.size(); ++y) {
        const WeightedEnsemble next = update_soft01(inst.prior, a, ys[y], beta, *inst.space);
        after += eta[static_cast<Eigen::Index>(y)] * potential(next, inst.distances, inst.target, 0);
      }
      s.record(after, (1.0 - rho * inst.lambda * beta / 2.0) * before);
    }
  }
  return s;
}

}  // namespace ndbal
