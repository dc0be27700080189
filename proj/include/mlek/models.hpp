#pragma once

#include <cstdint>
#include <memory>

#include <Eigen/Core>

#include "mlek/rng.hpp"

namespace mlek {

/// A hierarchy {G_l} of forward-model approximations. Level l costs
/// 2^(gamma*l) in G_0-equivalents and approximates the exact model with
/// mean-square error ~ 2^(-beta*l/2).
///
/// Coupled-noise contract for stochastic hierarchies: key.level is the pair
/// level; model_level is either key.level (fine member) or key.level - 1
/// (coarse member), and both members of a pair pass the same key so their
/// noise derives from one shared path. Deterministic hierarchies ignore the
/// key entirely.
class ModelHierarchy {
 public:
  virtual ~ModelHierarchy() = default;

  virtual int state_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual double beta() const = 0;
  virtual double gamma_rate() const = 0;
  virtual bool stochastic() const = 0;

  virtual Eigen::VectorXd evaluate(const Eigen::VectorXd& u, int model_level,
                                   const NoiseKey& key) const = 0;

  /// Cost of one level-l evaluation in G_0-equivalents: 2^(gamma*l).
  double cost_weight(int level) const { return std::exp2(gamma_rate() * level); }
};

inline double model_cost(const ModelHierarchy& hierarchy, int level) {
  return hierarchy.cost_weight(level);
}

// --- Ornstein-Uhlenbeck test problem: du = -u dt + sigma dW over dt = 1 ---

/// Exact one-unit-time integration given a standard normal draw z:
/// e^-1 u + sqrt(sigma^2 (1 - e^-2) / 2) z.
double ou_exact_step(double u, double sigma, double z);

/// Brownian increments of one unit-time path at resolution 2^-level,
/// drawn from the stream: 2^level increments, each N(0, 2^-level).
Eigen::VectorXd brownian_increments(const NoiseStream& stream, int level);

/// Coarsen a fine increment sequence by pairwise summation (same endpoint,
/// half the resolution).
Eigen::VectorXd aggregate_increments(const Eigen::VectorXd& fine);

/// Milstein recursion for the OU drift over the unit interval with the given
/// increments. The diffusion is constant, so the Milstein correction term is
/// identically zero and the recursion coincides with Euler-Maruyama.
double ou_milstein_recursion(double u, double sigma, const Eigen::VectorXd& increments);

/// Increments at model resolution 2^-model_level from a path drawn at the
/// key's pair level: used directly by the fine member, pairwise-aggregated
/// for the coarse member (the shared-path coupling).
Eigen::VectorXd coupled_increments(std::uint64_t seed, const NoiseKey& key, int model_level);

/// Milstein hierarchy for the OU process: level l takes 2^l substeps of size
/// 2^-l. beta = 2, gamma = 1.
class OuMilsteinHierarchy : public ModelHierarchy {
 public:
  OuMilsteinHierarchy(double sigma, std::uint64_t seed) : sigma_(sigma), seed_(seed) {}

  int state_dim() const override { return 1; }
  int output_dim() const override { return 1; }
  double beta() const override { return 2.0; }
  double gamma_rate() const override { return 1.0; }
  bool stochastic() const override { return true; }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& u, int model_level,
                           const NoiseKey& key) const override;

  double sigma() const { return sigma_; }

 private:
  double sigma_;
  std::uint64_t seed_;
};

/// The exact OU step as a single-level "hierarchy" (used for gold-standard
/// simulations); every level evaluates exactly, at unit cost.
class OuExactModel : public ModelHierarchy {
 public:
  OuExactModel(double sigma, std::uint64_t seed) : sigma_(sigma), seed_(seed) {}

  int state_dim() const override { return 1; }
  int output_dim() const override { return 1; }
  double beta() const override { return 2.0; }
  double gamma_rate() const override { return 0.0; }
  bool stochastic() const override { return true; }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& u, int model_level,
                           const NoiseKey& key) const override;

 private:
  double sigma_;
  std::uint64_t seed_;
};

}  // namespace mlek
