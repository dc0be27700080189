#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlek/darcy.hpp"
#include "mlek/engine.hpp"
#include "mlek/methods.hpp"
#include "mlek/models.hpp"

namespace mlek {

enum class Problem { ou_denkf, ou_enkf, darcy_eki, darcy_eks };
enum class Algorithm { single_level, multilevel };

std::string to_string(Problem p);
std::string to_string(Algorithm a);
Problem problem_from_string(const std::string& name);
Algorithm algorithm_from_string(const std::string& name);

struct OuProblemParams {
  double sigma = 0.5;
  double obs_noise_var = 0.04;
  double init_mean = 1.0;
  double init_std = 0.2;
  int num_steps = 10;
};

struct DarcyProblemParams {
  int grid_offset = 13;
  double kl_tau = 3.0;
  int num_modes = 16;
  double obs_noise_var = 0.01;
  double tau0 = 1.0;
  double tau_max = 10.0;
  int gold_level_boost = 3;  // gold/data level = L(min epsilon) + boost
};

struct ExperimentConfig {
  Problem problem = Problem::ou_denkf;
  Algorithm algorithm = Algorithm::multilevel;
  std::vector<double> epsilons = {0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625};
  int replications = 10;
  std::uint64_t base_seed = 1;
  std::uint64_t gold_seed = 5550101;
  std::uint64_t data_seed = 97;
  double j_const = 0.0;  // 0 selects the default policy (see effective_j_const)
  int slope_window = 4;
  int threads = 1;
  double horizon = std::numeric_limits<double>::infinity();
  std::string output_dir = "out";
  StepBudget steps;  // defaulted per problem when not set explicitly
  OuProblemParams ou;
  DarcyProblemParams darcy;
  int gold_replications = 10;
  int gold_particles = 10000;
  int gold_steps = 70;  // Darcy gold budget; OU gold uses ou.num_steps
};

/// Parse the key/value configuration format (see README for the key list).
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

/// Everything needed to run one problem: the sweep hierarchy, the reference
/// (gold) hierarchy and level, the method with its synthetic observations,
/// and the initial law. Observations are generated deterministically from
/// the data seed and shared by gold and sweep runs.
struct ProblemSetup {
  std::shared_ptr<ModelHierarchy> hierarchy;
  std::shared_ptr<ModelHierarchy> gold_hierarchy;
  int gold_level = 0;
  MethodSpec method;  // carries the observations and step schedule
  InitialLaw init;
  bool filtering = false;
  double beta = 0.0;
  double gamma = 0.0;
};

ProblemSetup make_problem(const ExperimentConfig& config);

/// The multilevel J_const default puts 8 particles on the top level at the
/// largest sweep epsilon; single-level defaults to 1. Explicit j_const wins.
double effective_j_const(const ExperimentConfig& config, const ProblemSetup& setup);

// --- Gold standard ---

struct GoldStandard {
  Eigen::VectorXd qoi;
  double std_error = 0.0;     // norm of the per-component standard error over the runs
  Eigen::MatrixXd run_qois;   // one column per gold run
  std::uint64_t seed = 0;
  std::string config_hash;
};

std::string gold_cache_dir();
std::string gold_config_hash(const ExperimentConfig& config);

/// Average of gold_replications independent large single-level runs with the
/// reference model. No caching; prefer load_or_compute_gold.
GoldStandard compute_gold_standard(const ExperimentConfig& config);

/// Disk-cached gold standard, keyed by the config hash; corrupt cache files
/// are recomputed with a warning.
GoldStandard load_or_compute_gold(const ExperimentConfig& config);

// --- Sweep, rate fit, report ---

struct SweepRow {
  double epsilon = 0.0;
  double mean_cost = 0.0;
  double rmse = 0.0;
  int level = 0;
  std::vector<int> ensemble_sizes;
  int num_steps = 0;
  std::vector<double> rep_costs;
  std::vector<Eigen::VectorXd> rep_qois;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;
};

struct ConvergenceReport {
  std::vector<SweepRow> rows;
  RateFit fit;
  int slope_window = 4;
  std::string gold_hash;
  Eigen::VectorXd gold_qoi;
  std::string config_id;
};

/// Root-mean-square error over replications against the gold QoI.
double rmse_against(const std::vector<Eigen::VectorXd>& qois, const Eigen::VectorXd& gold);

/// Least-squares fit of log2(rmse) against log2(cost) over the last `window`
/// rows (the asymptotic tail).
RateFit fit_rate(const std::vector<double>& costs, const std::vector<double>& rmses, int window);

/// For each epsilon: select parameters, run `replications` runs, and record
/// mean cost and RMSE against the gold standard.
ConvergenceReport rmse_sweep(const ExperimentConfig& config, const GoldStandard& gold);

/// Decimal notation with 12 significant digits (no exponent form).
std::string format_significant(double value, int digits = 12);

/// Writes the CSV (header epsilon,cost,rmse,slope_window) and a JSON metadata
/// sidecar next to it (same path with extension .json).
void emit_report(const ConvergenceReport& report, const std::string& csv_path);

struct CsvRow {
  double epsilon, cost, rmse;
  int slope_window;
};
std::vector<CsvRow> read_report_csv(const std::string& csv_path);

/// Cached per-run results, enough to regenerate the report deterministically.
void save_run_rows(const ConvergenceReport& report, const std::string& path);
ConvergenceReport load_run_rows(const std::string& path);

/// Rebuild RMSE values and the rate fit from cached rows (idempotent).
ConvergenceReport regenerate_report(ConvergenceReport report);

}  // namespace mlek
