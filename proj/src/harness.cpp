#include "ndbal/harness.hpp"

#include "ndbal/instances.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace ndbal {

using nlohmann::json;

const std::vector<std::string>& registered_families() {
  static const std::vector<std::string> names{"linear_logistic", "logit_choice", "interval_separation"};
  return names;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

/// Strict view of one JSON object: typed getters plus a check that every key
/// was consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where(), "expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(field(key), "expected a boolean");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!v.is_number()) throw ConfigError(field(key), "expected a number");
        if constexpr (std::is_integral_v<T>) {
          if (!v.is_number_integer()) throw ConfigError(field(key), "expected an integer");
          if constexpr (std::is_unsigned_v<T>)
            if (v.is_number_integer() && !v.is_number_unsigned())
              throw ConfigError(field(key), "must be non-negative");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(field(key), "expected a string");
      }
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(field(key), e.what());
    }
  }

  template <typename T>
  void read(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    read(key, v);
    out = v;
  }

  void mark(const char* key) { seen_.insert(key); }
  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ConfigError(field(k), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E, typename Parse>
void read_enum(ObjectReader& r, const char* key, E& out, Parse parse) {
  std::optional<std::string> s;
  r.read(key, s);
  if (!s) return;
  try {
    out = parse(*s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(r.field(key), e.what());
  }
}

void parse_family(const json& j, FamilyConfig& f) {
  ObjectReader r(j, "family");
  r.read("name", f.name);
  r.read("d", f.d);
  r.read("n_items", f.n_items);
  r.read("sigma", f.sigma);
  r.read("noise_scale", f.noise_scale);
  r.read("k", f.k);
  r.read("alpha", f.alpha);
  r.read("eps", f.eps);
  r.read("q", f.q);
  r.finish();

  const auto& names = registered_families();
  if (std::find(names.begin(), names.end(), f.name) == names.end())
    throw ConfigError("family.name", "unregistered family '" + f.name + "'");
  if (f.d < 1) throw ConfigError("family.d", "must be >= 1");
  if (f.n_items < 2) throw ConfigError("family.n_items", "must be >= 2");
  if (!(f.sigma > 0)) throw ConfigError("family.sigma", "must be > 0");
  if (!(f.noise_scale > 0)) throw ConfigError("family.noise_scale", "must be > 0");
  if (f.k < 1) throw ConfigError("family.k", "must be >= 1");
  if (!(f.alpha > 0 && f.alpha <= 0.5)) throw ConfigError("family.alpha", "must lie in (0, 1/2]");
  if (!(f.q >= 0 && f.q < 0.5)) throw ConfigError("family.q", "must lie in [0, 1/2)");
}

void parse_ndbal(const json& j, NdbalConfig& c) {
  ObjectReader r(j, "ndbal");
  r.read("beta", c.beta);
  r.read("alpha", c.alpha);
  r.read("delta", c.delta);
  r.read("m_atoms", c.m_atoms);
  r.read("n_pairs", c.n_pairs);
  r.read("tau", c.tau);
  read_enum(r, "update_rule", c.update_rule, parse_update_rule);
  read_enum(r, "loss", c.loss, parse_loss);
  read_enum(r, "mode", c.mode, parse_query_mode);
  r.read("budget", c.budget);
  r.read("select_k_max", c.select_k_max);
  r.read("qbc_attempt_cap", c.qbc_attempt_cap);
  r.read("target_error", c.target_error);
  r.read("theory_checks", c.theory_checks);
  if (r.has("stop")) {
    ObjectReader s(r.raw("stop"), "ndbal.stop");
    s.read("enabled", c.stop.enabled);
    s.read("eps", c.stop.eps);
    s.read("lambda", c.stop.lambda_prior);
    s.finish();
  }
  r.mark("stop");
  r.finish();
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    // "ndbal config: <field> must ..." -> ndbal.<field>
    std::string msg = e.what();
    const std::string prefix = "ndbal config: ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    const std::string key = msg.substr(0, msg.find(' '));
    throw ConfigError("ndbal." + key, msg.substr(key.size() + 1));
  }
}

void parse_mala(const json& j, MalaSettings& m) {
  ObjectReader r(j, "mala");
  r.read("burn_in", m.burn_in);
  r.read("thinning", m.thinning);
  r.read("window", m.window_size);
  r.read("adapt_every", m.adapt_every);
  r.read("initial_step", m.initial_step);
  r.finish();
  if (m.thinning < 1) throw ConfigError("mala.thinning", "must be >= 1");
  if (m.window_size < 1) throw ConfigError("mala.window", "must be >= 1");
  if (m.adapt_every < 1) throw ConfigError("mala.adapt_every", "must be >= 1");
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  ObjectReader r(j, "");
  r.read("id", cfg.id);
  if (r.has("family")) parse_family(r.raw("family"), cfg.family);
  if (r.has("algorithms")) {
    const json& algs = r.raw("algorithms");
    if (!algs.is_array() || algs.empty())
      throw ConfigError("algorithms", "expected a non-empty array");
    cfg.algorithms.clear();
    for (std::size_t i = 0; i < algs.size(); ++i) {
      const std::string f = "algorithms[" + std::to_string(i) + "]";
      if (!algs[i].is_string()) throw ConfigError(f, "expected a string");
      try {
        cfg.algorithms.push_back(parse_algorithm(algs[i].get<std::string>()));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(f, e.what());
      }
    }
  }
  if (r.has("ndbal")) parse_ndbal(r.raw("ndbal"), cfg.ndbal);
  if (r.has("mala")) parse_mala(r.raw("mala"), cfg.mala);
  r.read("trials", cfg.trials);
  r.read("seed", cfg.seed);
  r.read("output", cfg.output);
  r.read("runs_output", cfg.runs_output);
  r.read("bootstrap_resamples", cfg.bootstrap_resamples);
  r.read("ci_level", cfg.ci_level);
  for (const char* k : {"family", "algorithms", "ndbal", "mala"}) r.mark(k);
  r.finish();

  if (cfg.id.empty()) throw ConfigError("id", "must be non-empty");
  if (cfg.trials < 1) throw ConfigError("trials", "must be >= 1");
  if (cfg.bootstrap_resamples < 1) throw ConfigError("bootstrap_resamples", "must be >= 1");
  if (!(cfg.ci_level > 0 && cfg.ci_level < 1)) throw ConfigError("ci_level", "must lie in (0, 1)");
  if (cfg.family.name == "interval_separation" &&
      cfg.ndbal.update_rule == UpdateRule::general_loss && cfg.ndbal.loss == Loss::logistic)
    throw ConfigError("ndbal.loss", "interval clusterings need the zero_one loss");
  if (cfg.family.name != "interval_separation" && cfg.ndbal.update_rule != UpdateRule::general_loss)
    throw ConfigError("ndbal.update_rule", "continuous families need general_loss");
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("line " + std::to_string(line) + ", column " + std::to_string(col),
                      "syntax error");
  }
  return parse_config(j);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json to_json(const ExperimentConfig& c) {
  json algs = json::array();
  for (Algorithm a : c.algorithms) algs.push_back(to_string(a));
  json nd = {{"beta", c.ndbal.beta},
             {"alpha", c.ndbal.alpha},
             {"delta", c.ndbal.delta},
             {"m_atoms", c.ndbal.m_atoms},
             {"n_pairs", c.ndbal.n_pairs},
             {"tau", c.ndbal.tau ? json(*c.ndbal.tau) : json(nullptr)},
             {"update_rule", to_string(c.ndbal.update_rule)},
             {"loss", to_string(c.ndbal.loss)},
             {"mode", to_string(c.ndbal.mode)},
             {"budget", c.ndbal.budget},
             {"select_k_max", c.ndbal.select_k_max},
             {"qbc_attempt_cap", c.ndbal.qbc_attempt_cap},
             {"target_error", c.ndbal.target_error ? json(*c.ndbal.target_error) : json(nullptr)},
             {"theory_checks", c.ndbal.theory_checks},
             {"stop",
              {{"enabled", c.ndbal.stop.enabled},
               {"eps", c.ndbal.stop.eps},
               {"lambda", c.ndbal.stop.lambda_prior}}}};
  return {{"id", c.id},
          {"family",
           {{"name", c.family.name},
            {"d", c.family.d},
            {"n_items", c.family.n_items},
            {"sigma", c.family.sigma},
            {"noise_scale", c.family.noise_scale},
            {"k", c.family.k},
            {"alpha", c.family.alpha},
            {"eps", c.family.eps},
            {"q", c.family.q}}},
          {"algorithms", algs},
          {"ndbal", nd},
          {"mala",
           {{"burn_in", c.mala.burn_in},
            {"thinning", c.mala.thinning},
            {"window", c.mala.window_size},
            {"adapt_every", c.mala.adapt_every},
            {"initial_step", c.mala.initial_step}}},
          {"trials", c.trials},
          {"seed", c.seed},
          {"output", c.output},
          {"runs_output", c.runs_output},
          {"bootstrap_resamples", c.bootstrap_resamples},
          {"ci_level", c.ci_level}};
}

// ---------------------------------------------------------------------------
// Bootstrap and CSV
// ---------------------------------------------------------------------------

namespace {

/// Linear interpolation between order statistics (type 7).
double quantile_sorted(const std::vector<double>& s, double p) {
  const double h = p * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::pair<double, double> bootstrap_ci(const std::vector<double>& samples, double level,
                                       std::size_t resamples, RngStream& rng) {
  if (samples.empty()) throw std::invalid_argument("bootstrap_ci: no samples");
  if (!(level > 0 && level < 1)) throw std::invalid_argument("bootstrap_ci: level must lie in (0, 1)");
  if (resamples < 1) throw std::invalid_argument("bootstrap_ci: need at least one resample");
  const std::size_t n = samples.size();
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += samples[rng.index(n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  return {quantile_sorted(means, (1 - level) / 2), quantile_sorted(means, (1 + level) / 2)};
}

void write_curves(const std::vector<CurvePoint>& points, std::ostream& os) {
  os << kCurveHeader << '\n';
  for (const auto& p : points)
    os << p.experiment << ',' << p.algorithm << ',' << p.trial_agg << ',' << p.round << ','
       << fmt(p.error_mean) << ',' << fmt(p.ci_low) << ',' << fmt(p.ci_high) << '\n';
}

void emit_curves(const std::vector<CurvePoint>& points, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write curve file '" + path + "'");
  write_curves(points, out);
  if (!out) throw Error("write failed for curve file '" + path + "'");
}

std::vector<CurvePoint> read_curves(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCurveHeader) throw Error("curve file: missing or bad header");
  std::vector<CurvePoint> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw Error("curve file: line " + std::to_string(line_no) + " has " +
                                   std::to_string(f.size()) + " fields");
    try {
      out.push_back({f[0], f[1], std::stoul(f[2]), std::stoul(f[3]), std::stod(f[4]),
                     std::stod(f[5]), std::stod(f[6])});
    } catch (const std::exception&) {
      throw Error("curve file: line " + std::to_string(line_no) + " is malformed");
    }
  }
  return out;
}

std::vector<CurvePoint> parse_curves(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read curve file '" + path + "'");
  return read_curves(in);
}

// ---------------------------------------------------------------------------
// Trials
// ---------------------------------------------------------------------------

TrialSetup build_trial(const ExperimentConfig& cfg, std::size_t trial) {
  const FamilyConfig& f = cfg.family;
  RngStream target_rng(cfg.seed, "target", trial);
  TrialSetup s;

  if (f.name == "linear_logistic" || f.name == "logit_choice") {
    const Eigen::VectorXd w_star = f.sigma * target_rng.normal_vector(f.d);
    s.target = Structure{w_star, -1};
    const MalaSettings mala = cfg.mala;
    const Eigen::Index dim = f.d;
    const double sigma = f.sigma;
    s.make_prior = [dim, sigma, mala] { return std::make_unique<ContinuousPosterior>(dim, sigma, mala); };

    if (f.name == "linear_logistic") {
      auto space = std::make_shared<const LinearClassifierSpace>(f.d);
      s.oracle = std::make_shared<const Oracle>(logistic_oracle(space, w_star, f.noise_scale));
      s.space = space;
      s.distance = classifier_distance();
      s.metrics = {s.distance};
    } else {
      RngStream item_rng(cfg.seed, "items", trial);
      const Eigen::MatrixXd items = LogitChoiceSpace::random_items(f.d, f.n_items, item_rng);
      auto space = std::make_shared<const LogitChoiceSpace>(items);
      s.oracle = std::make_shared<const Oracle>(logistic_oracle(space, w_star, f.noise_scale));
      s.space = space;
      s.distance = approx_best_item_distance(items, false);
      s.metrics = {best_item_distance(items), approx_best_item_distance(items, false)};
    }
    return s;
  }

  // interval_separation
  const SeparationFamily fam = build_separation_family(f.k, f.alpha, f.eps);
  std::vector<Structure> support = separation_prior_support(fam);
  s.target = support[target_rng.index(fam.n)];
  s.space = fam.space;
  s.oracle = std::make_shared<const Oracle>(flip_oracle(fam.space, s.target, f.q));
  s.distance = interval_I_distance(fam.interval());
  s.metrics = {s.distance, interval_c_distance()};
  s.make_prior = [support] { return std::make_unique<EnsemblePosterior>(uniform_ensemble(support)); };
  return s;
}

std::vector<CurvePoint> aggregate_curves(const ExperimentConfig& cfg,
                                         const std::vector<Algorithm>& algorithms,
                                         const std::vector<std::vector<RunRecord>>& runs) {
  std::vector<CurvePoint> out;
  if (runs.empty() || runs.front().empty()) return out;
  const std::vector<std::string>& metric_names = runs.front().front().metric_names;
  for (std::size_t m = 0; m < metric_names.size(); ++m) {
    const std::string experiment = cfg.id + ":" + metric_names[m];
    for (std::size_t a = 0; a < algorithms.size(); ++a) {
      const std::string alg = to_string(algorithms[a]);
      for (std::size_t t = 0; t <= cfg.ndbal.budget; ++t) {
        std::vector<double> xs;
        for (const RunRecord& r : runs[a]) {
          const RoundLog& log = r.rounds[std::min(t, r.rounds.size() - 1)];
          xs.push_back(log.errors[m]);
        }
        double mean = 0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        RngStream rng(cfg.seed, "bootstrap:" + experiment + ":" + alg, 0, t);
        auto [lo, hi] = bootstrap_ci(xs, cfg.ci_level, cfg.bootstrap_resamples, rng);
        out.push_back({experiment, alg, xs.size(), t, mean, std::min(lo, mean), std::max(hi, mean)});
      }
    }
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t jobs, bool write_files) {
  ExperimentResult result;
  result.algorithms = cfg.algorithms;
  result.runs.assign(cfg.algorithms.size(), std::vector<RunRecord>(cfg.trials));

  // Trial setups are shared read-only across algorithms.
  std::vector<TrialSetup> setups;
  for (std::size_t t = 0; t < cfg.trials; ++t) setups.push_back(build_trial(cfg, t));
  for (const auto& s : setups) validate(cfg.ndbal, s.oracle.get());

  const std::size_t total = cfg.algorithms.size() * cfg.trials;
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(total);
  auto worker = [&] {
    for (std::size_t job = next++; job < total; job = next++) {
      const std::size_t a = job / cfg.trials;
      const std::size_t t = job % cfg.trials;
      try {
        const TrialSetup& s = setups[t];
        RunContext ctx{*s.space, *s.oracle, s.distance, s.metrics, s.target};
        std::unique_ptr<Posterior> prior = s.make_prior();
        RngStream rng(cfg.seed, "run:" + to_string(cfg.algorithms[a]), t);
        result.runs[a][t] = run_algorithm(cfg.algorithms[a], cfg.ndbal, ctx, *prior, rng);
      } catch (...) {
        errors[job] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, total));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  result.curves = aggregate_curves(cfg, cfg.algorithms, result.runs);
  if (write_files) {
    emit_curves(result.curves, cfg.output);
    if (!cfg.runs_output.empty()) {
      std::ofstream out(cfg.runs_output, std::ios::binary);
      if (!out) throw Error("cannot write run log '" + cfg.runs_output + "'");
      write_run_log(result, out);
    }
  }
  return result;
}

void write_run_log(const ExperimentResult& result, std::ostream& os) {
  os << "algorithm,trial,round,queried,atom_id,response,diameter,atoms_drawn,structures_sampled,"
        "select_timeout,measured_split";
  if (!result.runs.empty() && !result.runs.front().empty())
    for (const auto& m : result.runs.front().front().metric_names) os << ",error_" << m;
  os << '\n';
  for (std::size_t a = 0; a < result.runs.size(); ++a)
    for (std::size_t t = 0; t < result.runs[a].size(); ++t)
      for (const RoundLog& r : result.runs[a][t].rounds) {
        os << to_string(result.algorithms[a]) << ',' << t << ',' << r.round << ',' << r.queried << ','
           << r.atom_id << ',' << r.response << ',' << fmt(r.diameter) << ',' << r.atoms_drawn << ','
           << r.structures_sampled << ',' << r.select_timeout << ',' << fmt(r.measured_split);
        for (double e : r.errors) os << ',' << fmt(e);
        os << '\n';
      }
}

}  // namespace ndbal
