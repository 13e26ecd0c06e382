#pragma once

// Experiment configuration, trial orchestration, bootstrap aggregation and
// CSV output.

#include "ndbal/ndbal.hpp"
#include "ndbal/samplers.hpp"

#include <iosfwd>

#include <json.hpp>

namespace ndbal {

/// Invalid configuration. `field` is a dotted path ("ndbal.beta") or a
/// "line L, column C" location for syntax errors.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct FamilyConfig {
  std::string name = "linear_logistic";  // linear_logistic | logit_choice | interval_separation
  Eigen::Index d = 10;
  Eigen::Index n_items = 50;
  double sigma = 5.0;
  double noise_scale = 1.0;  // logistic oracle temperature
  // interval_separation
  std::size_t k = 32;
  double alpha = 0.2;  // mu(I), I = [0, alpha]
  double eps = 0.0;    // <= 0: N = k + 1
  double q = 0.0;      // flip rate of the oracle
};

struct ExperimentConfig {
  std::string id = "experiment";
  FamilyConfig family;
  std::vector<Algorithm> algorithms{Algorithm::ndbal, Algorithm::qbc, Algorithm::random};
  NdbalConfig ndbal;
  MalaSettings mala;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::string output = "curves.csv";
  std::string runs_output;  // optional per-round log
  std::size_t bootstrap_resamples = 1000;
  double ci_level = 0.68;
};

const std::vector<std::string>& registered_families();

/// Strict parse: unknown keys and ill-typed values raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

struct CurvePoint {
  std::string experiment;
  std::string algorithm;
  std::size_t trial_agg = 0;  // number of trials averaged
  std::size_t round = 0;
  double error_mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

/// Percentile bootstrap interval for the mean at `level`.
std::pair<double, double> bootstrap_ci(const std::vector<double>& samples, double level,
                                       std::size_t resamples, RngStream& rng);

inline constexpr const char* kCurveHeader =
    "experiment,algorithm,trial_agg,round,error_mean,ci_low,ci_high";

void write_curves(const std::vector<CurvePoint>& points, std::ostream& os);
/// Writes the CSV (LF line endings, header first). Throws Error when the path
/// cannot be opened.
void emit_curves(const std::vector<CurvePoint>& points, const std::string& path);
std::vector<CurvePoint> read_curves(std::istream& is);
std::vector<CurvePoint> parse_curves(const std::string& path);

/// Everything one trial needs; built from the trial's derived streams so every
/// algorithm sees the same target and instance.
struct TrialSetup {
  std::shared_ptr<const StructureSpace> space;
  std::shared_ptr<const Oracle> oracle;
  DistanceFn distance;
  std::vector<DistanceFn> metrics;
  Structure target;
  std::function<std::unique_ptr<Posterior>()> make_prior;
};

TrialSetup build_trial(const ExperimentConfig& cfg, std::size_t trial);

struct ExperimentResult {
  std::vector<Algorithm> algorithms;
  std::vector<std::vector<RunRecord>> runs;  // [algorithm][trial]
  std::vector<CurvePoint> curves;
};

/// Errors of `runs` at each round 0..budget, one curve per (metric, algorithm).
/// Runs that ended early carry their last error forward.
std::vector<CurvePoint> aggregate_curves(const ExperimentConfig& cfg,
                                         const std::vector<Algorithm>& algorithms,
                                         const std::vector<std::vector<RunRecord>>& runs);

/// Runs trials x algorithms on `jobs` worker threads and aggregates curves.
/// Output files are written only when `write_files` is set.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1,
                                bool write_files = true);

void write_run_log(const ExperimentResult& result, std::ostream& os);

}  // namespace ndbal
