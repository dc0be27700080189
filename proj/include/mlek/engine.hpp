#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "mlek/methods.hpp"
#include "mlek/models.hpp"
#include "mlek/stats.hpp"

namespace mlek {

/// Initial particle law: mean + sqrt_cov * z with z ~ N(0, I).
struct InitialLaw {
  Eigen::VectorXd mean;
  Eigen::MatrixXd sqrt_cov;

  Eigen::VectorXd sample(std::uint64_t seed, const NoiseKey& key) const;
};

struct RunConfig {
  int level = 0;                     // L
  std::vector<int> ensemble_sizes;   // single-level: {J}; multilevel: {J_0, ..., J_L}
  int num_steps = 0;                 // N
  double horizon = std::numeric_limits<double>::infinity();  // stop once sum of tau reaches this
  std::uint64_t seed = 0;
  std::uint32_t replica = 0;
  int threads = 1;
  InitialLaw init;
};

/// One subensemble pair; level 0 has no coarse member.
struct LevelPair {
  Eigen::MatrixXd fine;    // d_u x J_l, one particle per column
  Eigen::MatrixXd coarse;  // empty at level 0
};

struct MultilevelEnsemble {
  std::vector<LevelPair> levels;
};

struct RunResult {
  Eigen::VectorXd qoi;
  double total_cost = 0.0;
  std::vector<std::int64_t> eval_counts;  // model evaluations performed, by model level
  int steps_taken = 0;
  std::vector<int> ensemble_sizes;
  std::uint64_t seed = 0;
};

/// Called after each step with the statistic and step size every particle
/// consumed and the post-update ensemble (single-level runs pass a one-level
/// ensemble). Invoked sequentially at the step barrier.
struct StepInfo {
  int step = 0;
  double tau = 1.0;
  const StatBundle& theta;
  const MultilevelEnsemble& ensemble;
};
using StepObserver = std::function<void(const StepInfo&)>;

/// Fixed-accuracy single-ensemble simulation: all particles on level L, one
/// sample statistic per step, QoI is the final particle mean.
RunResult run_single_level(const MethodSpec& method, const ModelHierarchy& hierarchy,
                           const RunConfig& config, const StepObserver& observer = {});

/// Single-ensemble multilevel simulation: a level-0 subensemble plus coupled
/// fine/coarse pairs per level, all propagated with the telescoped multilevel
/// statistic; QoI is the telescoped particle mean.
RunResult run_multilevel(const MethodSpec& method, const ModelHierarchy& hierarchy,
                         const RunConfig& config, const StepObserver& observer = {});

// --- Parameter selection from the target accuracy epsilon ---

struct MlParams {
  int level = 0;
  std::vector<int> ensemble_sizes;
};

/// L = floor(2 log2(1/eps) / beta) and J_l = J_const 2^(-(beta+2gamma) l / 3)
/// times 2^(beta L), L^2 2^(beta L), or 2^((beta+2gamma) L / 3) according to
/// the sign of beta - gamma; every J_l is clamped to at least 2.
MlParams select_params_ml(double epsilon, double beta, double gamma, double j_const);

struct SlParams {
  int level = 0;
  int ensemble_size = 0;
};

/// L as above and J = max(2, ceil(J_const / eps^2)).
SlParams select_params_sl(double epsilon, double beta, double gamma, double j_const);

struct StepBudget {
  enum class Kind { fixed, power_law } kind = Kind::fixed;
  int fixed_steps = 10;
  double n_const = 10.0;
  double delta = 0.1;
};

/// Number of time steps for accuracy epsilon: the fixed count, or
/// max(1, ceil(N_const * eps^-delta)).
int step_budget(double epsilon, const StepBudget& schedule);

}  // namespace mlek
