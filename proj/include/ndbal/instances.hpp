#pragma once

// Concrete structure spaces, distances and oracles: linear classifiers,
// logit-choice preferences, feature rankings, interval clusterings on [0, 1]
// and explicit finite tables.

#include "ndbal/core.hpp"

#include <cmath>
#include <memory>
#include <numbers>

namespace ndbal {

// ---------------------------------------------------------------------------
// Geometric distances (expression-friendly)
// ---------------------------------------------------------------------------

/// Angle between w and v divided by pi. Equals the disagreement probability of
/// the two homogeneous halfspaces under any spherically symmetric law.
template <typename DerivedA, typename DerivedB>
double d_classifier(const Eigen::MatrixBase<DerivedA>& w, const Eigen::MatrixBase<DerivedB>& v) {
  const double nw = w.norm();
  const double nv = v.norm();
  if (nw == 0.0 || nv == 0.0) throw std::invalid_argument("d_classifier: zero weight vector");
  const double c = std::clamp(w.dot(v) / (nw * nv), -1.0, 1.0);
  return std::acos(c) / std::numbers::pi;
}

/// Index of the top item argmax_i <w, x_i>; ties go to the lowest index.
/// `items` holds one item per column.
template <typename DerivedW, typename DerivedX>
Eigen::Index top_item(const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedX>& items) {
  if (items.cols() == 0) throw std::invalid_argument("top_item: no items");
  const Eigen::VectorXd scores = items.transpose() * w;
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

enum class RankMeasure { uniform_sphere, gaussian };

/// Kendall-tau style ranking distance, closed form for spherically symmetric
/// object measures.
template <typename DerivedA, typename DerivedB>
double d_rank(const Eigen::MatrixBase<DerivedA>& w, const Eigen::MatrixBase<DerivedB>& v) {
  return d_classifier(w, v);
}

/// Pr_{x,y ~ mu}(w(x,y) != v(x,y)) estimated from `n` object pairs.
MeanEstimate d_rank_mc(const Eigen::VectorXd& w, const Eigen::VectorXd& v, RankMeasure mu,
                       std::size_t n, RngStream& rng);

double d_best_item(const Eigen::VectorXd& w, const Eigen::VectorXd& v, const Eigen::MatrixXd& items);
/// |x_{i_w} - x_{i_v}|, halved when `normalized` (unit-sphere items).
double d_approx_best_item(const Eigen::VectorXd& w, const Eigen::VectorXd& v,
                          const Eigen::MatrixXd& items, bool normalized);

// ---------------------------------------------------------------------------
// Spaces
// ---------------------------------------------------------------------------

/// Homogeneous halfspaces sign(<w, x>) with x uniform on S^{d-1}. Labels {-1, +1}.
class LinearClassifierSpace final : public LinearMarginSpace {
 public:
  explicit LinearClassifierSpace(Eigen::Index dim);

  const ResponseSet& responses() const override { return responses_; }
  Atom sample_atom(RngStream& rng) const override;
  Response evaluate(const Structure& g, const Atom& a) const override;
  Eigen::Index dimension() const override { return dim_; }
  Eigen::VectorXd feature(const Atom& a) const override;

  static Atom make_atom(std::uint64_t id, Eigen::VectorXd x) { return Atom{id, std::move(x)}; }

 private:
  Eigen::Index dim_;
  ResponseSet responses_{{-1, 1}};
};

/// Pairwise comparisons between fixed items. Atom payload (i, j), i != j;
/// response +1 when item i is preferred, -1 otherwise.
class LogitChoiceSpace final : public LinearMarginSpace {
 public:
  /// `items` holds one unit-norm item per column.
  explicit LogitChoiceSpace(Eigen::MatrixXd items);

  const ResponseSet& responses() const override { return responses_; }
  Atom sample_atom(RngStream& rng) const override;
  Response evaluate(const Structure& g, const Atom& a) const override;
  Eigen::Index dimension() const override { return items_.rows(); }
  Eigen::VectorXd feature(const Atom& a) const override;

  const Eigen::MatrixXd& items() const { return items_; }
  Eigen::Index item_count() const { return items_.cols(); }
  Atom make_atom(std::uint64_t id, Eigen::Index i, Eigen::Index j) const;

  /// n items drawn uniformly from S^{dim-1}.
  static Eigen::MatrixXd random_items(Eigen::Index dim, Eigen::Index n, RngStream& rng);

 private:
  std::pair<Eigen::Index, Eigen::Index> pair_of(const Atom& a) const;

  Eigen::MatrixXd items_;
  ResponseSet responses_{{1, -1}};
};

/// Feature rankings: w in S^{d-1} ranks x over y iff <w,x> > <w,y>.
/// Atom payload is [x; y]; response 1 when x is ranked over y, else 0.
class RankingSpace final : public StructureSpace {
 public:
  RankingSpace(Eigen::Index dim, RankMeasure mu);

  const ResponseSet& responses() const override { return responses_; }
  Atom sample_atom(RngStream& rng) const override;
  Response evaluate(const Structure& g, const Atom& a) const override;

  Eigen::Index dimension() const { return dim_; }
  RankMeasure measure() const { return mu_; }
  Eigen::VectorXd sample_object(RngStream& rng) const;
  Structure sample_structure(RngStream& rng) const;

 private:
  Eigen::Index dim_;
  RankMeasure mu_;
  ResponseSet responses_{{0, 1}};
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double mass() const { return hi - lo; }
};

/// Clusterings of [0, 1] (uniform measure) into at most `k` intervals that keep
/// the protected interval I inside a single cluster. A structure is its sorted
/// boundary list; a point x lies in cluster #{b : b < x}. Atom payload (x, y);
/// response 1 when x and y share a cluster.
class IntervalClusteringSpace final : public StructureSpace {
 public:
  IntervalClusteringSpace(std::size_t k, Interval protected_interval);

  const ResponseSet& responses() const override { return responses_; }
  Atom sample_atom(RngStream& rng) const override;
  Response evaluate(const Structure& g, const Atom& a) const override;

  std::size_t cluster_cap() const { return k_; }
  const Interval& protected_interval() const { return interval_; }

  /// Throws std::invalid_argument unless boundaries are sorted, at most k-1 of
  /// them, and none lies in [I.lo, I.hi).
  void validate(const Structure& g) const;
  /// k-1 sorted uniforms drawn outside I.
  Structure sample_structure(RngStream& rng) const;
  Atom make_atom(std::uint64_t id, double x, double y) const;

 private:
  std::size_t k_;
  Interval interval_;
  ResponseSet responses_{{0, 1}};
};

std::size_t cluster_of(const Eigen::VectorXd& boundaries, double x);

/// Cluster [lo, hi] containing I under boundary list g.
Interval cluster_containing(const Eigen::VectorXd& boundaries, const Interval& I);

/// Pr_{x,y ~ U[0,1]}(g(x,y) != g'(x,y)), exact.
double d_interval_c(const Eigen::VectorXd& g, const Eigen::VectorXd& h);
/// Pr_{x ~ U[0,1]}(g(x,I) != g'(x,I)), exact. Throws if a boundary splits I.
double d_interval_I(const Eigen::VectorXd& g, const Eigen::VectorXd& h, const Interval& I);

/// Explicit finite instance: atoms 0..n-1 with protected-attribute bits, and
/// structures given as complete response tables. Atom payload is
/// [index, protected bit]; D is uniform over the atoms.
class FiniteLabeledSpace final : public StructureSpace {
 public:
  /// `tables` has one row per structure and one column per atom.
  FiniteLabeledSpace(ResponseSet responses, Eigen::MatrixXi tables,
                     std::vector<int> protected_bits = {});

  const ResponseSet& responses() const override { return responses_; }
  Atom sample_atom(RngStream& rng) const override;
  Response evaluate(const Structure& g, const Atom& a) const override;
  std::optional<std::vector<Structure>> enumerate() const override { return structures_; }

  std::size_t atom_count() const { return static_cast<std::size_t>(tables_.cols()); }
  std::size_t structure_count() const { return structures_.size(); }
  const std::vector<Structure>& structures() const { return structures_; }
  Atom atom(std::size_t i) const;
  int protected_bit(std::size_t i) const { return protected_[i]; }

 private:
  std::size_t atom_index(const Atom& a) const;

  ResponseSet responses_;
  Eigen::MatrixXi tables_;
  std::vector<int> protected_;
  std::vector<Structure> structures_;
};

/// max(|C(g) \ C(g')| / |C(g)|, |C(g') \ C(g)| / |C(g')|) where C(g) is the
/// set of items sharing i*'s cluster label (i* included).
double d_cluster_id(const Eigen::VectorXi& labels_g, const Eigen::VectorXi& labels_h,
                    Eigen::Index i_star);

/// Error-plus-equal-opportunity distance over a finite space with binary
/// {0, 1} responses. Conditionals on empty events contribute 0.
double d_fair(const Structure& g, const Structure& h, double lambda_fair,
              const FiniteLabeledSpace& space);

// ---------------------------------------------------------------------------
// DistanceFn factories
// ---------------------------------------------------------------------------

DistanceFn classifier_distance();
DistanceFn rank_distance();
DistanceFn best_item_distance(Eigen::MatrixXd items);
DistanceFn approx_best_item_distance(Eigen::MatrixXd items, bool normalized);
DistanceFn interval_c_distance();
DistanceFn interval_I_distance(Interval I);
DistanceFn cluster_id_distance(Eigen::Index i_star);
DistanceFn fair_distance(std::shared_ptr<const FiniteLabeledSpace> space, double lambda_fair);
/// Lookup in a symmetric matrix keyed by Structure::id.
DistanceFn table_distance(Eigen::MatrixXd table);

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

Oracle noiseless_oracle(std::shared_ptr<const StructureSpace> space, Structure target);
/// g*(a) with probability 1 - q, otherwise a uniformly chosen other label.
/// Requires q < (|Y| - 1) / |Y| so the true label stays the most likely.
Oracle flip_oracle(std::shared_ptr<const StructureSpace> space, Structure target, double q);
/// Flip oracle whose margin eta(g*(a)|a) - max_{y != g*(a)} eta(y|a) equals lambda.
Oracle massart_oracle(std::shared_ptr<const StructureSpace> space, Structure target,
                      double lambda_noise);
/// Flip rate that yields Massart margin lambda over |Y| labels.
double massart_flip_rate(double lambda_noise, std::size_t label_count);
/// ln((1 - q) / q).
double recommended_beta(double q);

/// Pr(+1 | a) = 1 / (1 + exp(-scale * <w*, phi(a)>)).
Oracle logistic_oracle(std::shared_ptr<const LinearMarginSpace> space, Eigen::VectorXd w_star,
                       double scale = 1.0);
/// Picks item i over j with probability 1 / (1 + exp(-<w*, x_i - x_j>)).
Oracle logit_choice_oracle(std::shared_ptr<const LogitChoiceSpace> space, Eigen::VectorXd w_star);

// ---------------------------------------------------------------------------
// Star-shaped interval family
// ---------------------------------------------------------------------------

/// g_o with dividing points alpha + i(1-alpha)/k (i = 0..k-1) and the variants
/// g_1..g_{N-1}, each adding the midpoint of one of g_o's outer cells. Under
/// d_c the disagreement regions of (g_o, g_i) are pairwise disjoint, so each
/// query separates g_o from at most one g_i.
struct SeparationFamily {
  std::shared_ptr<const IntervalClusteringSpace> space;  // cap k + 2, I = [0, alpha]
  std::vector<Structure> star;                           // star[0] = g_o
  std::size_t k = 0;
  double alpha = 0.0;
  std::size_t n = 0;  // |star|

  const Interval& interval() const { return space->protected_interval(); }
};

/// N = min(k, floor(1/sqrt(8 eps))) + 1; eps <= 0 means N = k + 1.
/// Requires alpha <= 1/2.
SeparationFamily build_separation_family(std::size_t k, double alpha, double eps = 0.0);

/// The star family plus k "merged" clusterings that drop g_o's first j
/// dividing points (j = 1..k), so the cluster holding I varies across the
/// family. Ids are assigned 0..size-1 with the star first.
std::vector<Structure> separation_prior_support(const SeparationFamily& family);

}  // namespace ndbal
