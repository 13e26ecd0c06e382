#include "ndbal/splitting.hpp"

#include "ndbal/select.hpp"

#include <cmath>

namespace ndbal {

EdgeSet make_edge_set(const std::vector<Structure>& structures, const DistanceFn& d, double eps_edge) {
  EdgeSet e;
  e.eps_edge = eps_edge;
  for (std::size_t i = 0; i < structures.size(); ++i)
    for (std::size_t j = i + 1; j < structures.size(); ++j)
      if (d(structures[i], structures[j]) > eps_edge) e.edges.emplace_back(structures[i], structures[j]);
  return e;
}

double edge_split(const EdgeSet& e, const Atom& a, const StructureSpace& space) {
  if (e.edges.empty()) throw std::invalid_argument("edge_split: empty edge set");
  const ResponseSet& ys = space.responses();
  std::vector<std::size_t> kept(ys.size(), 0);
  for (const auto& [g, h] : e.edges) {
    const Response y = space.evaluate(g, a);
    if (y == space.evaluate(h, a)) ++kept[ys.index_of(y)];
  }
  const std::size_t worst = *std::max_element(kept.begin(), kept.end());
  return 1.0 - static_cast<double>(worst) / static_cast<double>(e.edges.size());
}

BinomialCI wilson_interval(std::size_t successes, std::size_t n, double z) {
  if (successes > n) throw std::invalid_argument("wilson_interval: successes exceed trials");
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
  // Exact endpoints at the boundary, clear of round-off.
  return {successes == 0 ? 0.0 : std::max(0.0, centre - half),
          successes == n ? 1.0 : std::min(1.0, centre + half)};
}

double index_rho_star(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("index_rho_star: eps must lie in (0, 1)");
  return 1.0 / (16.0 * std::ceil(std::log2(2.0 / eps)));
}

std::vector<double> default_rho_grid(double rho_star) {
  return {rho_star / 2, rho_star, 2 * rho_star, 0.1, 0.25, 0.5};
}

namespace {

/// Counts, per grid point, how many of `n_atoms` fresh draws reach each rho.
void tally_splits(const StructureSpace& space, const WeightedEnsemble& e, const Eigen::MatrixXd& D,
                  std::size_t n_atoms, RngStream& rng, IndexReport& report) {
  const Eigen::VectorXd w = e.probabilities();
  if (!(w.dot(D * w) > 0.0))
    throw DegeneratePosterior("estimate_avg_split_tau: posterior has zero average diameter");
  const ResponseSet& ys = space.responses();
  std::vector<std::size_t> resp(e.size());
  for (std::size_t n = 0; n < n_atoms; ++n) {
    const Atom a = space.sample_atom(rng);
    for (std::size_t i = 0; i < e.size(); ++i) resp[i] = ys.index_of(space.evaluate(e.structures[i], a));
    const double rho = average_split(w, D, resp, ys.size());
    for (std::size_t k = 0; k < report.rho_grid.size(); ++k)
      if (rho >= report.rho_grid[k]) ++report.hits[k];
  }
  report.n_atoms += n_atoms;
}

void finish(IndexReport& r) {
  r.tau_hat.clear();
  r.ci.clear();
  for (std::size_t h : r.hits) {
    r.tau_hat.push_back(r.n_atoms ? static_cast<double>(h) / static_cast<double>(r.n_atoms) : 0.0);
    r.ci.push_back(wilson_interval(h, r.n_atoms));
  }
}

IndexReport empty_report(const std::vector<double>& grid, std::size_t ensemble_size) {
  IndexReport r;
  r.rho_grid = grid;
  r.hits.assign(grid.size(), 0);
  r.n_pairs = ensemble_size * (ensemble_size - 1) / 2;
  return r;
}

void summarize(IndexVerification& v) {
  finish(v.report);
  v.tau_star = v.report.tau_hat[1];
  v.tau_star_ci = v.report.ci[1];
  v.c_hat = v.tau_star / v.eps;
}

/// Unit vectors normalize(c + s z_i) for fixed directions z_i.
std::vector<Structure> cap_ensemble(const Eigen::VectorXd& c, const std::vector<Eigen::VectorXd>& z,
                                    double s) {
  std::vector<Structure> out;
  out.reserve(z.size());
  for (const auto& zi : z) {
    Eigen::VectorXd w = c + s * zi;
    const double n = w.norm();
    out.push_back(Structure{n > 0 ? Eigen::VectorXd(w / n) : c, -1});
  }
  return out;
}

}  // namespace

IndexReport estimate_avg_split_tau(const StructureSpace& space, const WeightedEnsemble& e,
                                   const DistanceFn& d, const std::vector<double>& rho_grid,
                                   std::size_t n_atoms, RngStream& rng) {
  IndexReport r = empty_report(rho_grid, e.size());
  tally_splits(space, e, pairwise_distances(e.structures, d), n_atoms, rng, r);
  finish(r);
  return r;
}

IndexVerification verify_ranking_index(Eigen::Index d_dim, double eps, std::size_t n_trials,
                                       RngStream& rng, IndexProbeSettings settings) {
  if (d_dim < 2) throw std::invalid_argument("verify_ranking_index: dimension must be >= 2");
  IndexVerification v;
  v.family = "ranking";
  v.ensemble_kind = "uniform over a spherical cap with avg-diam in (eps, 2 eps]";
  v.eps = eps;
  v.rho_star = index_rho_star(eps);
  v.report = empty_report(default_rho_grid(v.rho_star), settings.ensemble_size);

  const RankingSpace space(d_dim, RankMeasure::uniform_sphere);
  const DistanceFn d = rank_distance();
  for (std::size_t t = 0; t < n_trials; ++t) {
    const Eigen::VectorXd c = rng.unit_sphere(d_dim);
    std::vector<Eigen::VectorXd> z;
    for (std::size_t i = 0; i < settings.ensemble_size; ++i) z.push_back(rng.normal_vector(d_dim));

    // Bisect the cap spread towards avg-diam = 1.5 eps.
    double lo = 0.0, hi = 64.0;
    std::vector<Structure> gs;
    Eigen::MatrixXd D;
    double diam = 0.0;
    const double n = static_cast<double>(settings.ensemble_size);
    for (int it = 0; it < 60; ++it) {
      const double s = 0.5 * (lo + hi);
      gs = cap_ensemble(c, z, s);
      D = pairwise_distances(gs, d);
      diam = D.sum() / (n * n);
      if (diam > eps && diam <= 2 * eps && std::abs(diam - 1.5 * eps) < 0.05 * eps) break;
      (diam < 1.5 * eps ? lo : hi) = s;
    }
    if (!(diam > eps && diam <= 2 * eps)) {
      ++v.ensembles_skipped;
      continue;
    }
    ++v.ensembles_used;
    tally_splits(space, uniform_ensemble(std::move(gs)), D, settings.atoms_per_ensemble, rng, v.report);
  }
  summarize(v);
  return v;
}

IndexVerification verify_interval_index(std::size_t k, Interval I, double eps,
                                        std::size_t n_trials, RngStream& rng,
                                        IndexProbeSettings settings) {
  IndexVerification v;
  v.family = "interval";
  v.ensemble_kind = "uniform over i.i.d. prior draws";
  v.eps = eps;
  v.rho_star = index_rho_star(eps);
  v.tau_floor = eps * I.mass() / 2.0;
  v.report = empty_report(default_rho_grid(v.rho_star), settings.ensemble_size);

  const IntervalClusteringSpace space(k, I);
  const DistanceFn d = interval_I_distance(I);
  for (std::size_t t = 0; t < n_trials; ++t) {
    std::vector<Structure> gs;
    for (std::size_t i = 0; i < settings.ensemble_size; ++i) gs.push_back(space.sample_structure(rng));
    const Eigen::MatrixXd D = pairwise_distances(gs, d);
    const double n = static_cast<double>(gs.size());
    if (!(D.sum() / (n * n) > eps)) {
      ++v.ensembles_skipped;
      continue;
    }
    ++v.ensembles_used;
    tally_splits(space, uniform_ensemble(std::move(gs)), D, settings.atoms_per_ensemble, rng, v.report);
  }
  summarize(v);
  return v;
}

std::vector<SplitProbeRow> splitting_vs_avg_splitting_probe(const StructureSpace& space,
                                                            const WeightedEnsemble& e,
                                                            const EdgeSet& edges,
                                                            const DistanceFn& d, std::size_t n_atoms,
                                                            RngStream& rng) {
  if (edges.edges.empty()) throw std::invalid_argument("split probe: empty edge set");
  const Eigen::MatrixXd D = pairwise_distances(e.structures, d);
  const Eigen::VectorXd w = e.probabilities();
  const ResponseSet& ys = space.responses();
  std::vector<std::size_t> resp(e.size());
  std::vector<SplitProbeRow> rows;
  rows.reserve(n_atoms);
  for (std::size_t n = 0; n < n_atoms; ++n) {
    const Atom a = space.sample_atom(rng);
    for (std::size_t i = 0; i < e.size(); ++i) resp[i] = ys.index_of(space.evaluate(e.structures[i], a));
    rows.push_back({a.id, edge_split(edges, a, space), average_split(w, D, resp, ys.size())});
  }
  return rows;
}

}  // namespace ndbal
