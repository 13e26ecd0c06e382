#pragma once

// Domain abstractions shared by every module: atoms, responses, structures,
// structure spaces, distances, oracles, weighted ensembles, posteriors and
// seeded random streams.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ndbal {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Atom payload does not fit the space it was handed to.
class IncompatibleAtom : public Error {
 public:
  using Error::Error;
};

/// Every log-weight of an ensemble is -inf.
class EmptyPosterior : public Error {
 public:
  using Error::Error;
};

/// Hard update left no consistent structure.
class VersionSpaceEmpty : public Error {
 public:
  using Error::Error;
};

/// Average split requested of a zero-diameter posterior.
class DegeneratePosterior : public Error {
 public:
  using Error::Error;
};

/// SELECT ran out of rounds. Carries the candidate with the largest min_y tally.
class SelectTimeout : public Error {
 public:
  SelectTimeout(std::size_t best_index, std::size_t rounds)
      : Error("select-timeout: no candidate reached the threshold after " +
              std::to_string(rounds) + " rounds"),
        best_index_(best_index),
        rounds_(rounds) {}

  std::size_t best_index() const { return best_index_; }
  std::size_t rounds() const { return rounds_; }

 private:
  std::size_t best_index_;
  std::size_t rounds_;
};

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

/// Seeded stream keyed by (master seed, component, trial, round). Identical keys
/// give identical draws. Single-owner: movable, not copyable.
class RngStream {
 public:
  explicit RngStream(std::uint64_t master_seed, std::string_view component = "root",
                     std::uint64_t trial = 0, std::uint64_t round = 0);

  RngStream(const RngStream&) = delete;
  RngStream& operator=(const RngStream&) = delete;
  RngStream(RngStream&&) = default;
  RngStream& operator=(RngStream&&) = default;

  /// New independent stream from the same master seed.
  RngStream derive(std::string_view component, std::uint64_t trial = 0,
                   std::uint64_t round = 0) const {
    return RngStream(master_seed_, component, trial, round);
  }

  std::uint64_t master_seed() const { return master_seed_; }
  std::mt19937_64& engine() { return engine_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return normal_(engine_); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t bits() { return engine_(); }

  Eigen::VectorXd normal_vector(Eigen::Index dim);
  /// Uniform draw from the unit sphere S^{dim-1}.
  Eigen::VectorXd unit_sphere(Eigen::Index dim);

 private:
  std::uint64_t master_seed_;
  std::mt19937_64 engine_;
  // Kept across calls so the second deviate of each polar pair is not thrown away.
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view component,
                          std::uint64_t trial, std::uint64_t round);

// ---------------------------------------------------------------------------
// Atoms, responses, structures
// ---------------------------------------------------------------------------

/// Atomic question. Equality is by id so repeated draws of numerically equal
/// payloads stay distinct candidates.
struct Atom {
  std::uint64_t id = 0;
  Eigen::VectorXd payload;

  friend bool operator==(const Atom& a, const Atom& b) { return a.id == b.id; }
};

using Response = int;

class ResponseSet {
 public:
  explicit ResponseSet(std::vector<Response> labels);

  const std::vector<Response>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  Response operator[](std::size_t i) const { return labels_[i]; }
  /// Position of `y` in the label list; throws if absent.
  std::size_t index_of(Response y) const;
  bool contains(Response y) const;

 private:
  std::vector<Response> labels_;
};

/// A structure is its parameterization: a weight vector, a sorted boundary
/// list, or a response table. `id` is set when the structure belongs to an
/// enumerated family (table-driven distances key on it).
struct Structure {
  Eigen::VectorXd params;
  std::int64_t id = -1;
};

class StructureSpace {
 public:
  virtual ~StructureSpace() = default;

  virtual const ResponseSet& responses() const = 0;
  /// One draw from the atom distribution D.
  virtual Atom sample_atom(RngStream& rng) const = 0;
  /// Deterministic g(a). Throws IncompatibleAtom on a malformed payload.
  virtual Response evaluate(const Structure& g, const Atom& a) const = 0;
  virtual std::optional<std::vector<Structure>> enumerate() const { return std::nullopt; }
};

/// Spaces whose structures are weight vectors acting through a linear margin
/// z = <w, phi(a)>. The general-loss machinery and MALA posteriors need phi.
class LinearMarginSpace : public StructureSpace {
 public:
  virtual Eigen::Index dimension() const = 0;
  virtual Eigen::VectorXd feature(const Atom& a) const = 0;

  double margin(const Structure& g, const Atom& a) const { return g.params.dot(feature(a)); }
};

Response evaluate(const StructureSpace& space, const Structure& g, const Atom& a);

/// Monte Carlo mean with its standard error.
struct MeanEstimate {
  double value = 0.0;
  std::size_t n = 0;
  double std_err = 0.0;
};

MeanEstimate mean_estimate(const std::vector<double>& xs);

// ---------------------------------------------------------------------------
// Distances
// ---------------------------------------------------------------------------

/// Structure distance: symmetric, zero on the diagonal, values in [0, 1]
/// (raw plotting variants excepted, see instances.hpp).
struct DistanceFn {
  std::string name;
  std::function<double(const Structure&, const Structure&)> eval;

  double operator()(const Structure& g, const Structure& h) const { return eval(g, h); }
};

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

struct NoiseDescriptor {
  std::optional<double> massart_margin;  // lambda
  std::optional<double> flip_rate;       // q
};

/// Conditional response law eta(y | a) plus a sampler for it.
class Oracle {
 public:
  /// Probability vector ordered like ResponseSet::labels().
  using Law = std::function<Eigen::VectorXd(const Atom&)>;

  Oracle(ResponseSet responses, Law law, std::optional<Structure> target = std::nullopt,
         NoiseDescriptor noise = {});

  Eigen::VectorXd law(const Atom& a) const { return law_(a); }
  Response respond(const Atom& a, RngStream& rng) const;

  const ResponseSet& responses() const { return responses_; }
  const std::optional<Structure>& target() const { return target_; }
  const NoiseDescriptor& noise() const { return noise_; }

 private:
  ResponseSet responses_;
  Law law_;
  std::optional<Structure> target_;
  NoiseDescriptor noise_;
};

// ---------------------------------------------------------------------------
// Posteriors
// ---------------------------------------------------------------------------

/// Finite posterior kept in log space.
struct WeightedEnsemble {
  std::vector<Structure> structures;
  Eigen::VectorXd log_weights;

  std::size_t size() const { return structures.size(); }
  /// exp(log_weights); meaningful after normalize().
  /// Scalar exp so that -inf maps to exactly 0 (the packet exp underflows to a denormal).
  Eigen::VectorXd probabilities() const {
    return log_weights.unaryExpr([](double x) { return std::exp(x); });
  }
};

WeightedEnsemble uniform_ensemble(std::vector<Structure> structures);

/// Log-sum-exp normalization. Throws EmptyPosterior when every weight is -inf.
WeightedEnsemble normalize(WeightedEnsemble e);

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v);

/// Anything that can hand out structures drawn from the current posterior.
/// Continuous posteriors return correlated chain output; pairs are taken as
/// consecutive entries of a batch.
class Posterior {
 public:
  virtual ~Posterior() = default;

  virtual std::vector<Structure> sample(std::size_t n, RngStream& rng) = 0;
  /// Exact representation when the posterior is a finite ensemble.
  virtual const WeightedEnsemble* ensemble() const { return nullptr; }
};

}  // namespace ndbal
