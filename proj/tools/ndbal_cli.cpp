// Command-line front end: run experiments, verify guarantees, summarize curves.

#include "ndbal/checks.hpp"
#include "ndbal/harness.hpp"
#include "ndbal/splitting.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <thread>

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out, const std::string& mode, std::size_t jobs) {
  ndbal::ExperimentConfig cfg = ndbal::load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.output = out;
  if (!mode.empty()) {
    try {
      cfg.ndbal.mode = ndbal::parse_query_mode(mode);
    } catch (const std::invalid_argument& e) {
      throw ndbal::ConfigError("--mode", e.what());
    }
  }
  const ndbal::ExperimentResult r = ndbal::run_experiment(cfg, jobs);
  for (const auto& p : r.curves)
    if (p.round == cfg.ndbal.budget)
      std::printf("%-32s %-8s round %-4zu error %.4f  [%.4f, %.4f]\n", p.experiment.c_str(),
                  p.algorithm.c_str(), p.round, p.error_mean, p.ci_low, p.ci_high);
  std::printf("wrote %s\n", cfg.output.c_str());
  return 0;
}

void print_check(const ndbal::CheckSummary& s) {
  std::printf("%-40s %s  cases %zu  violations %zu  worst excess %.3g\n", s.name.c_str(),
              s.passed() ? "PASS" : "FAIL", s.cases, s.violations, s.worst_excess);
}

void print_index(const ndbal::IndexVerification& v) {
  std::printf("%s index (%s)\n", v.family.c_str(), v.ensemble_kind.c_str());
  std::printf("  eps %.3g  rho* %.5g  ensembles used %zu skipped %zu  atoms %zu\n", v.eps, v.rho_star,
              v.ensembles_used, v.ensembles_skipped, v.report.n_atoms);
  for (std::size_t i = 0; i < v.report.rho_grid.size(); ++i)
    std::printf("  rho %-8.5g tau %.4f  [%.4f, %.4f]\n", v.report.rho_grid[i], v.report.tau_hat[i],
                v.report.ci[i].lo, v.report.ci[i].hi);
  std::printf("  tau(rho*) %.4f  c-hat %.3f  floor %.4g  %s\n", v.tau_star, v.c_hat, v.tau_floor,
              v.floor_violated() ? "FLOOR VIOLATED" : "ok");
}

int cmd_verify(const std::string& suite, std::uint64_t seed, std::size_t instances) {
  bool ok = true;
  if (suite == "lemmas" || suite == "all") {
    ndbal::RngStream rng(seed, "verify:lemmas");
    for (const auto& s : {ndbal::check_distance_bound(instances, rng),
                          ndbal::check_inverse_mass_supermartingale(instances, rng),
                          ndbal::check_potential_drop(instances, rng)}) {
      print_check(s);
      ok = ok && s.passed();
    }
  }
  if (suite == "index" || suite == "all") {
    ndbal::RngStream rng(seed, "verify:index");
    const auto r = ndbal::verify_ranking_index(2, 0.1, 50, rng);
    const auto i = ndbal::verify_interval_index(4, ndbal::Interval{0.0, 0.2}, 0.1, 50, rng);
    print_index(r);
    print_index(i);
    ok = ok && r.ci_excludes_zero() && i.ci_excludes_zero() && !i.floor_violated();
  }
  return ok ? 0 : kExitCheckFailed;
}

int cmd_report(const std::string& path) {
  const auto points = ndbal::parse_curves(path);
  std::map<std::pair<std::string, std::string>, ndbal::CurvePoint> last;
  for (const auto& p : points) {
    auto& slot = last[{p.experiment, p.algorithm}];
    if (p.round >= slot.round) slot = p;
  }
  for (const auto& [key, p] : last)
    std::printf("%-32s %-8s trials %-4zu round %-4zu error %.4f  [%.4f, %.4f]\n", key.first.c_str(),
                key.second.c_str(), p.trial_agg, p.round, p.error_mean, p.ci_low, p.ci_high);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-tolerant diameter-based active learning simulator"};
  app.require_subcommand(1);

  std::string config, out, mode, curves, suite = "all";
  std::optional<std::uint64_t> seed;
  std::uint64_t verify_seed = 1;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  std::size_t instances = 500;

  auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  run->add_option("--config", config, "Experiment config (JSON)")->required();
  run->add_option("--seed", seed, "Override the master seed");
  run->add_option("--out", out, "Override the curve CSV path");
  run->add_option("--mode", mode, "Query selection mode")->check(CLI::IsMember({"theory", "heuristic"}));
  run->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "Exact lemma checks and index verifications");
  verify->add_option("--suite", suite, "lemmas | index | all")->check(CLI::IsMember({"lemmas", "index", "all"}));
  verify->add_option("--seed", verify_seed, "Master seed");
  verify->add_option("--instances", instances, "Random instances per lemma check");

  auto* report = app.add_subcommand("report", "Summarize the last round of a curve CSV");
  report->add_option("--curves", curves, "Curve CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config, seed, out, mode, jobs);
    if (*verify) return cmd_verify(suite, verify_seed, instances);
    return cmd_report(curves);
  } catch (const ndbal::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
}
