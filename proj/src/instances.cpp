#include "ndbal/instances.hpp"

#include <algorithm>
#include <set>

namespace ndbal {

namespace {

void require_size(const Atom& a, Eigen::Index n, const char* what) {
  if (a.payload.size() != n)
    throw IncompatibleAtom(std::string(what) + ": atom payload has size " +
                           std::to_string(a.payload.size()) + ", expected " + std::to_string(n));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::VectorXd sample_object(RankMeasure mu, Eigen::Index dim, RngStream& rng) {
  return mu == RankMeasure::uniform_sphere ? rng.unit_sphere(dim) : rng.normal_vector(dim);
}

}  // namespace

MeanEstimate d_rank_mc(const Eigen::VectorXd& w, const Eigen::VectorXd& v, RankMeasure mu,
                       std::size_t n, RngStream& rng) {
  std::vector<double> hits;
  hits.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd x = sample_object(mu, w.size(), rng);
    const Eigen::VectorXd y = sample_object(mu, w.size(), rng);
    const bool a = w.dot(x) > w.dot(y);
    const bool b = v.dot(x) > v.dot(y);
    hits.push_back(a != b ? 1.0 : 0.0);
  }
  return mean_estimate(hits);
}

double d_best_item(const Eigen::VectorXd& w, const Eigen::VectorXd& v, const Eigen::MatrixXd& items) {
  return top_item(w, items) == top_item(v, items) ? 0.0 : 1.0;
}

double d_approx_best_item(const Eigen::VectorXd& w, const Eigen::VectorXd& v,
                          const Eigen::MatrixXd& items, bool normalized) {
  const double gap = (items.col(top_item(w, items)) - items.col(top_item(v, items))).norm();
  return normalized ? gap / 2.0 : gap;
}

// ---------------------------------------------------------------------------

LinearClassifierSpace::LinearClassifierSpace(Eigen::Index dim) : dim_(dim) {
  if (dim < 1) throw std::invalid_argument("linear classifier space: dimension must be >= 1");
}

Atom LinearClassifierSpace::sample_atom(RngStream& rng) const {
  const std::uint64_t id = rng.bits();
  return Atom{id, rng.unit_sphere(dim_)};
}

Eigen::VectorXd LinearClassifierSpace::feature(const Atom& a) const {
  require_size(a, dim_, "linear classifier");
  return a.payload;
}

Response LinearClassifierSpace::evaluate(const Structure& g, const Atom& a) const {
  require_size(a, dim_, "linear classifier");
  if (g.params.size() != dim_) throw std::invalid_argument("linear classifier: bad weight size");
  return g.params.dot(a.payload) > 0 ? 1 : -1;
}

// ---------------------------------------------------------------------------

LogitChoiceSpace::LogitChoiceSpace(Eigen::MatrixXd items) : items_(std::move(items)) {
  if (items_.cols() < 2) throw std::invalid_argument("logit choice space: need at least 2 items");
}

Eigen::MatrixXd LogitChoiceSpace::random_items(Eigen::Index dim, Eigen::Index n, RngStream& rng) {
  Eigen::MatrixXd items(dim, n);
  for (Eigen::Index i = 0; i < n; ++i) items.col(i) = rng.unit_sphere(dim);
  return items;
}

Atom LogitChoiceSpace::make_atom(std::uint64_t id, Eigen::Index i, Eigen::Index j) const {
  if (i == j || i < 0 || j < 0 || i >= item_count() || j >= item_count())
    throw IncompatibleAtom("logit choice: invalid item pair");
  Eigen::VectorXd p(2);
  p << static_cast<double>(i), static_cast<double>(j);
  return Atom{id, std::move(p)};
}

Atom LogitChoiceSpace::sample_atom(RngStream& rng) const {
  const std::uint64_t id = rng.bits();
  const auto n = static_cast<std::size_t>(item_count());
  const auto i = static_cast<Eigen::Index>(rng.index(n));
  auto j = static_cast<Eigen::Index>(rng.index(n - 1));
  if (j >= i) ++j;
  return make_atom(id, i, j);
}

std::pair<Eigen::Index, Eigen::Index> LogitChoiceSpace::pair_of(const Atom& a) const {
  require_size(a, 2, "logit choice");
  const auto i = static_cast<Eigen::Index>(a.payload[0]);
  const auto j = static_cast<Eigen::Index>(a.payload[1]);
  if (i == j || i < 0 || j < 0 || i >= item_count() || j >= item_count())
    throw IncompatibleAtom("logit choice: item index out of range");
  return {i, j};
}

Eigen::VectorXd LogitChoiceSpace::feature(const Atom& a) const {
  const auto [i, j] = pair_of(a);
  return items_.col(i) - items_.col(j);
}

Response LogitChoiceSpace::evaluate(const Structure& g, const Atom& a) const {
  return margin(g, a) > 0 ? 1 : -1;
}

// ---------------------------------------------------------------------------

RankingSpace::RankingSpace(Eigen::Index dim, RankMeasure mu) : dim_(dim), mu_(mu) {
  if (dim < 2) throw std::invalid_argument("ranking space: dimension must be >= 2");
}

Eigen::VectorXd RankingSpace::sample_object(RngStream& rng) const {
  return ndbal::sample_object(mu_, dim_, rng);
}

Structure RankingSpace::sample_structure(RngStream& rng) const {
  return Structure{rng.unit_sphere(dim_), -1};
}

Atom RankingSpace::sample_atom(RngStream& rng) const {
  const std::uint64_t id = rng.bits();
  Eigen::VectorXd p(2 * dim_);
  p.head(dim_) = sample_object(rng);
  p.tail(dim_) = sample_object(rng);
  return Atom{id, std::move(p)};
}

Response RankingSpace::evaluate(const Structure& g, const Atom& a) const {
  require_size(a, 2 * dim_, "ranking");
  return g.params.dot(a.payload.head(dim_)) > g.params.dot(a.payload.tail(dim_)) ? 1 : 0;
}

// ---------------------------------------------------------------------------

std::size_t cluster_of(const Eigen::VectorXd& boundaries, double x) {
  std::size_t c = 0;
  for (Eigen::Index i = 0; i < boundaries.size(); ++i)
    if (boundaries[i] < x) ++c;
  return c;
}

Interval cluster_containing(const Eigen::VectorXd& boundaries, const Interval& I) {
  Interval c{0.0, 1.0};
  for (Eigen::Index i = 0; i < boundaries.size(); ++i) {
    const double b = boundaries[i];
    if (b >= I.lo && b < I.hi)
      throw std::invalid_argument("interval clustering: boundary splits the protected interval");
    if (b < I.lo) c.lo = std::max(c.lo, b);
    if (b >= I.hi) c.hi = std::min(c.hi, b);
  }
  return c;
}

double d_interval_c(const Eigen::VectorXd& g, const Eigen::VectorXd& h) {
  std::vector<double> cuts{0.0, 1.0};
  for (Eigen::Index i = 0; i < g.size(); ++i) cuts.push_back(std::clamp(g[i], 0.0, 1.0));
  for (Eigen::Index i = 0; i < h.size(); ++i) cuts.push_back(std::clamp(h[i], 0.0, 1.0));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const std::size_t cells = cuts.size() - 1;
  std::vector<double> len(cells);
  std::vector<std::size_t> cg(cells), ch(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    len[c] = cuts[c + 1] - cuts[c];
    const double mid = 0.5 * (cuts[c] + cuts[c + 1]);
    cg[c] = cluster_of(g, mid);
    ch[c] = cluster_of(h, mid);
  }
  double total = 0.0;
  for (std::size_t a = 0; a < cells; ++a)
    for (std::size_t b = 0; b < cells; ++b)
      if ((cg[a] == cg[b]) != (ch[a] == ch[b])) total += len[a] * len[b];
  return total;
}

double d_interval_I(const Eigen::VectorXd& g, const Eigen::VectorXd& h, const Interval& I) {
  const Interval a = cluster_containing(g, I);
  const Interval b = cluster_containing(h, I);
  return std::abs(a.lo - b.lo) + std::abs(a.hi - b.hi);
}

IntervalClusteringSpace::IntervalClusteringSpace(std::size_t k, Interval protected_interval)
    : k_(k), interval_(protected_interval) {
  if (k < 1) throw std::invalid_argument("interval clustering: cluster cap must be >= 1");
  if (!(0.0 <= interval_.lo && interval_.lo <= interval_.hi && interval_.hi <= 1.0))
    throw std::invalid_argument("interval clustering: protected interval must lie in [0, 1]");
}

void IntervalClusteringSpace::validate(const Structure& g) const {
  const auto& b = g.params;
  if (static_cast<std::size_t>(b.size()) + 1 > k_)
    throw std::invalid_argument("interval clustering: too many boundaries for cluster cap");
  for (Eigen::Index i = 1; i < b.size(); ++i)
    if (b[i] < b[i - 1]) throw std::invalid_argument("interval clustering: boundaries not sorted");
  cluster_containing(b, interval_);
}

Structure IntervalClusteringSpace::sample_structure(RngStream& rng) const {
  const double outside = 1.0 - interval_.mass();
  Eigen::VectorXd b(static_cast<Eigen::Index>(k_ - 1));
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    // Uniform on [0,1] \ [lo, hi) via the complement's length.
    const double u = rng.uniform() * outside;
    b[i] = u < interval_.lo ? u : u + interval_.mass();
  }
  std::sort(b.data(), b.data() + b.size());
  return Structure{std::move(b), -1};
}

Atom IntervalClusteringSpace::make_atom(std::uint64_t id, double x, double y) const {
  Eigen::VectorXd p(2);
  p << x, y;
  return Atom{id, std::move(p)};
}

Atom IntervalClusteringSpace::sample_atom(RngStream& rng) const {
  const std::uint64_t id = rng.bits();
  const double x = rng.uniform();
  const double y = rng.uniform();
  return make_atom(id, x, y);
}

Response IntervalClusteringSpace::evaluate(const Structure& g, const Atom& a) const {
  require_size(a, 2, "interval clustering");
  return cluster_of(g.params, a.payload[0]) == cluster_of(g.params, a.payload[1]) ? 1 : 0;
}

// ---------------------------------------------------------------------------

FiniteLabeledSpace::FiniteLabeledSpace(ResponseSet responses, Eigen::MatrixXi tables,
                                       std::vector<int> protected_bits)
    : responses_(std::move(responses)), tables_(std::move(tables)), protected_(std::move(protected_bits)) {
  if (tables_.rows() == 0 || tables_.cols() == 0)
    throw std::invalid_argument("finite space: response table must be non-empty");
  if (protected_.empty()) protected_.assign(static_cast<std::size_t>(tables_.cols()), 0);
  if (protected_.size() != static_cast<std::size_t>(tables_.cols()))
    throw std::invalid_argument("finite space: one protected bit per atom required");
  for (Eigen::Index r = 0; r < tables_.rows(); ++r) {
    for (Eigen::Index c = 0; c < tables_.cols(); ++c)
      if (!responses_.contains(tables_(r, c)))
        throw std::invalid_argument("finite space: table entry outside the response set");
    structures_.push_back(Structure{tables_.row(r).cast<double>().transpose(), r});
  }
}

Atom FiniteLabeledSpace::atom(std::size_t i) const {
  if (i >= atom_count()) throw IncompatibleAtom("finite space: atom index out of range");
  Eigen::VectorXd p(2);
  p << static_cast<double>(i), static_cast<double>(protected_[i]);
  return Atom{static_cast<std::uint64_t>(i), std::move(p)};
}

Atom FiniteLabeledSpace::sample_atom(RngStream& rng) const { return atom(rng.index(atom_count())); }

std::size_t FiniteLabeledSpace::atom_index(const Atom& a) const {
  require_size(a, 2, "finite space");
  const double v = a.payload[0];
  if (v < 0 || v >= static_cast<double>(atom_count()) || v != std::floor(v))
    throw IncompatibleAtom("finite space: atom index out of range");
  return static_cast<std::size_t>(v);
}

Response FiniteLabeledSpace::evaluate(const Structure& g, const Atom& a) const {
  const std::size_t i = atom_index(a);
  if (static_cast<std::size_t>(g.params.size()) != atom_count())
    throw std::invalid_argument("finite space: structure table has the wrong length");
  return static_cast<Response>(g.params[static_cast<Eigen::Index>(i)]);
}

double d_cluster_id(const Eigen::VectorXi& labels_g, const Eigen::VectorXi& labels_h,
                    Eigen::Index i_star) {
  if (labels_g.size() != labels_h.size() || i_star < 0 || i_star >= labels_g.size())
    throw std::invalid_argument("d_cluster_id: inconsistent item universe");
  std::size_t size_g = 0, size_h = 0, g_minus_h = 0, h_minus_g = 0;
  for (Eigen::Index j = 0; j < labels_g.size(); ++j) {
    const bool in_g = labels_g[j] == labels_g[i_star];
    const bool in_h = labels_h[j] == labels_h[i_star];
    size_g += in_g;
    size_h += in_h;
    g_minus_h += in_g && !in_h;
    h_minus_g += in_h && !in_g;
  }
  return std::max(static_cast<double>(g_minus_h) / static_cast<double>(size_g),
                  static_cast<double>(h_minus_g) / static_cast<double>(size_h));
}

double d_fair(const Structure& g, const Structure& h, double lambda_fair,
              const FiniteLabeledSpace& space) {
  const std::size_t n = space.atom_count();
  std::size_t disagree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Atom a = space.atom(i);
    disagree += space.evaluate(g, a) != space.evaluate(h, a);
  }
  // |E_{D_0}[u(a) | v(a) = 1] - E_{D_1}[u(a) | v(a) = 1]|, 0 when either
  // conditioning event is empty.
  auto gap = [&](const Structure& u, const Structure& v) {
    double sum[2] = {0, 0};
    double cnt[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      const Atom a = space.atom(i);
      if (space.evaluate(v, a) != 1) continue;
      const int p = space.protected_bit(i) ? 1 : 0;
      cnt[p] += 1;
      sum[p] += space.evaluate(u, a) == 1 ? 1.0 : 0.0;
    }
    if (cnt[0] == 0 || cnt[1] == 0) return 0.0;
    return std::abs(sum[0] / cnt[0] - sum[1] / cnt[1]);
  };
  const double err = static_cast<double>(disagree) / static_cast<double>(n);
  return std::max({err, lambda_fair * gap(g, h), lambda_fair * gap(h, g)});
}

// ---------------------------------------------------------------------------

DistanceFn classifier_distance() {
  return {"classifier", [](const Structure& g, const Structure& h) {
            return d_classifier(g.params, h.params);
          }};
}

DistanceFn rank_distance() {
  return {"rank", [](const Structure& g, const Structure& h) { return d_rank(g.params, h.params); }};
}

DistanceFn best_item_distance(Eigen::MatrixXd items) {
  return {"best_item", [items = std::move(items)](const Structure& g, const Structure& h) {
            return d_best_item(g.params, h.params, items);
          }};
}

DistanceFn approx_best_item_distance(Eigen::MatrixXd items, bool normalized) {
  return {normalized ? "approx_best_item_normalized" : "approx_best_item",
          [items = std::move(items), normalized](const Structure& g, const Structure& h) {
            return d_approx_best_item(g.params, h.params, items, normalized);
          }};
}

DistanceFn interval_c_distance() {
  return {"interval_c",
          [](const Structure& g, const Structure& h) { return d_interval_c(g.params, h.params); }};
}

DistanceFn interval_I_distance(Interval I) {
  return {"interval_I", [I](const Structure& g, const Structure& h) {
            return d_interval_I(g.params, h.params, I);
          }};
}

DistanceFn cluster_id_distance(Eigen::Index i_star) {
  return {"cluster_id", [i_star](const Structure& g, const Structure& h) {
            return d_cluster_id(g.params.cast<int>(), h.params.cast<int>(), i_star);
          }};
}

DistanceFn fair_distance(std::shared_ptr<const FiniteLabeledSpace> space, double lambda_fair) {
  return {"fair", [space = std::move(space), lambda_fair](const Structure& g, const Structure& h) {
            return d_fair(g, h, lambda_fair, *space);
          }};
}

DistanceFn table_distance(Eigen::MatrixXd table) {
  return {"table", [table = std::move(table)](const Structure& g, const Structure& h) {
            if (g.id < 0 || h.id < 0 || g.id >= table.rows() || h.id >= table.rows())
              throw std::invalid_argument("table distance: structure id outside the table");
            return table(g.id, h.id);
          }};
}

// ---------------------------------------------------------------------------

double massart_flip_rate(double lambda_noise, std::size_t label_count) {
  if (!(lambda_noise > 0.0 && lambda_noise <= 1.0))
    throw std::invalid_argument("massart oracle: lambda must lie in (0, 1]");
  if (label_count < 2) throw std::invalid_argument("massart oracle: need at least two labels");
  const double k = static_cast<double>(label_count);
  // (1 - q) - q / (k - 1) = lambda
  return (1.0 - lambda_noise) * (k - 1.0) / k;
}

double recommended_beta(double q) {
  if (!(q > 0.0 && q < 0.5)) throw std::invalid_argument("recommended_beta: q must lie in (0, 1/2)");
  return std::log((1.0 - q) / q);
}

Oracle flip_oracle(std::shared_ptr<const StructureSpace> space, Structure target, double q) {
  const ResponseSet& ys = space->responses();
  const auto k = static_cast<Eigen::Index>(ys.size());
  // The true label must stay strictly most likely: 1 - q > q / (k - 1).
  const double q_max = k > 1 ? static_cast<double>(k - 1) / static_cast<double>(k) : 0.0;
  if (!(q >= 0.0 && (q < q_max || q == 0.0)))
    throw std::invalid_argument("flip oracle: q must lie in [0, (|Y|-1)/|Y|)");
  Oracle::Law law = [space, target, q, k](const Atom& a) {
    const std::size_t truth = space->responses().index_of(space->evaluate(target, a));
    Eigen::VectorXd p = Eigen::VectorXd::Constant(k, k > 1 ? q / static_cast<double>(k - 1) : 0.0);
    p[static_cast<Eigen::Index>(truth)] = 1.0 - (k > 1 ? q : 0.0);
    return p;
  };
  NoiseDescriptor noise;
  noise.flip_rate = q;
  noise.massart_margin = (1.0 - q) - (k > 1 ? q / static_cast<double>(k - 1) : 0.0);
  return Oracle(ys, std::move(law), std::move(target), noise);
}

Oracle noiseless_oracle(std::shared_ptr<const StructureSpace> space, Structure target) {
  return flip_oracle(std::move(space), std::move(target), 0.0);
}

Oracle massart_oracle(std::shared_ptr<const StructureSpace> space, Structure target,
                      double lambda_noise) {
  const double q = massart_flip_rate(lambda_noise, space->responses().size());
  Oracle o = flip_oracle(std::move(space), std::move(target), q);
  return o;
}

Oracle logistic_oracle(std::shared_ptr<const LinearMarginSpace> space, Eigen::VectorXd w_star,
                       double scale) {
  const ResponseSet& ys = space->responses();
  const std::size_t pos = ys.index_of(1);
  const std::size_t neg = ys.index_of(-1);
  Structure target{w_star, -1};
  Oracle::Law law = [space, w_star = std::move(w_star), scale, pos, neg,
                     k = static_cast<Eigen::Index>(ys.size())](const Atom& a) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(k);
    const double up = sigmoid(scale * w_star.dot(space->feature(a)));
    p[static_cast<Eigen::Index>(pos)] = up;
    p[static_cast<Eigen::Index>(neg)] = 1.0 - up;
    return p;
  };
  return Oracle(ys, std::move(law), std::move(target));
}

Oracle logit_choice_oracle(std::shared_ptr<const LogitChoiceSpace> space, Eigen::VectorXd w_star) {
  return logistic_oracle(std::move(space), std::move(w_star), 1.0);
}

// ---------------------------------------------------------------------------

SeparationFamily build_separation_family(std::size_t k, double alpha, double eps) {
  if (k < 1) throw std::invalid_argument("separation family: k must be >= 1");
  if (!(alpha > 0.0 && alpha <= 0.5))
    throw std::invalid_argument("separation family: mu(I) must lie in (0, 1/2]");
  std::size_t variants = k;
  if (eps > 0.0) {
    const double cap = std::floor(1.0 / std::sqrt(8.0 * eps));
    variants = std::min<std::size_t>(k, static_cast<std::size_t>(cap));
  }

  SeparationFamily fam;
  fam.k = k;
  fam.alpha = alpha;
  fam.space = std::make_shared<IntervalClusteringSpace>(k + 2, Interval{0.0, alpha});

  const double width = (1.0 - alpha) / static_cast<double>(k);
  Eigen::VectorXd base(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) base[static_cast<Eigen::Index>(i)] = alpha + static_cast<double>(i) * width;
  fam.star.push_back(Structure{base, 0});
  for (std::size_t i = 1; i <= variants; ++i) {
    const double b = alpha + (2.0 * static_cast<double>(i) - 1.0) * width / 2.0;
    Eigen::VectorXd v(static_cast<Eigen::Index>(k + 1));
    v.head(static_cast<Eigen::Index>(k)) = base;
    v[static_cast<Eigen::Index>(k)] = b;
    std::sort(v.data(), v.data() + v.size());
    fam.star.push_back(Structure{std::move(v), static_cast<std::int64_t>(i)});
  }
  fam.n = fam.star.size();
  return fam;
}

std::vector<Structure> separation_prior_support(const SeparationFamily& family) {
  std::vector<Structure> out = family.star;
  const Eigen::VectorXd& base = family.star.front().params;
  for (Eigen::Index j = 1; j <= base.size(); ++j)
    out.push_back(Structure{base.tail(base.size() - j), 0});
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = static_cast<std::int64_t>(i);
  return out;
}

}  // namespace ndbal
