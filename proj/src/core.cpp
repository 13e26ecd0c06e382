#include "ndbal/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace ndbal {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view component,
                          std::uint64_t trial, std::uint64_t round) {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ fnv1a(component));
  h = splitmix64(h ^ trial);
  h = splitmix64(h ^ (round * 0x2545f4914f6cdd1dULL));
  return h;
}

RngStream::RngStream(std::uint64_t master_seed, std::string_view component, std::uint64_t trial,
                     std::uint64_t round)
    : master_seed_(master_seed), engine_(derive_seed(master_seed, component, trial, round)) {}

Eigen::VectorXd RngStream::normal_vector(Eigen::Index dim) {
  Eigen::VectorXd v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal();
  return v;
}

Eigen::VectorXd RngStream::unit_sphere(Eigen::Index dim) {
  for (;;) {
    Eigen::VectorXd v = normal_vector(dim);
    const double n = v.norm();
    if (n > 1e-300) return v / n;
  }
}

ResponseSet::ResponseSet(std::vector<Response> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw std::invalid_argument("response set must be non-empty");
  std::unordered_set<Response> seen(labels_.begin(), labels_.end());
  if (seen.size() != labels_.size())
    throw std::invalid_argument("response set contains duplicate labels");
}

std::size_t ResponseSet::index_of(Response y) const {
  auto it = std::find(labels_.begin(), labels_.end(), y);
  if (it == labels_.end())
    throw std::invalid_argument("response " + std::to_string(y) + " not in response set");
  return static_cast<std::size_t>(it - labels_.begin());
}

bool ResponseSet::contains(Response y) const {
  return std::find(labels_.begin(), labels_.end(), y) != labels_.end();
}

Response evaluate(const StructureSpace& space, const Structure& g, const Atom& a) {
  return space.evaluate(g, a);
}

Oracle::Oracle(ResponseSet responses, Law law, std::optional<Structure> target,
               NoiseDescriptor noise)
    : responses_(std::move(responses)),
      law_(std::move(law)),
      target_(std::move(target)),
      noise_(noise) {}

Response Oracle::respond(const Atom& a, RngStream& rng) const {
  const Eigen::VectorXd p = law_(a);
  double u = rng.uniform();
  for (Eigen::Index i = 0; i + 1 < p.size(); ++i) {
    if (u < p[i]) return responses_[static_cast<std::size_t>(i)];
    u -= p[i];
  }
  return responses_[responses_.size() - 1];
}

MeanEstimate mean_estimate(const std::vector<double>& xs) {
  MeanEstimate est;
  est.n = xs.size();
  if (xs.empty()) return est;
  double sum = 0.0;
  for (double x : xs) sum += x;
  est.value = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - est.value) * (x - est.value);
    est.std_err = std::sqrt(ss / static_cast<double>(xs.size() - 1) /
                            static_cast<double>(xs.size()));
  }
  return est;
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

WeightedEnsemble uniform_ensemble(std::vector<Structure> structures) {
  WeightedEnsemble e;
  const auto n = static_cast<Eigen::Index>(structures.size());
  e.structures = std::move(structures);
  e.log_weights = Eigen::VectorXd::Constant(n, -std::log(static_cast<double>(n)));
  return e;
}

WeightedEnsemble normalize(WeightedEnsemble e) {
  if (e.log_weights.size() != static_cast<Eigen::Index>(e.structures.size()))
    throw std::invalid_argument("ensemble: structure and weight counts differ");
  if (e.log_weights.size() == 0) throw EmptyPosterior("empty posterior: no structures");
  if (e.log_weights.array().isNaN().any() ||
      (e.log_weights.array() == std::numeric_limits<double>::infinity()).any())
    throw std::invalid_argument("ensemble: log-weights must be finite or -inf");
  const double lse = log_sum_exp(e.log_weights);
  if (!std::isfinite(lse)) throw EmptyPosterior("empty posterior: every log-weight is -inf");
  e.log_weights.array() -= lse;
  return e;
}

}  // namespace ndbal
