#include "mlek/models.hpp"

#include <cmath>
#include <stdexcept>

namespace mlek {

double ou_exact_step(double u, double sigma, double z) {
  const double decay = std::exp(-1.0);
  const double noise_std = sigma * std::sqrt((1.0 - std::exp(-2.0)) / 2.0);
  return decay * u + noise_std * z;
}

Eigen::VectorXd brownian_increments(const NoiseStream& stream, int level) {
  const Eigen::Index count = Eigen::Index(1) << level;
  const double sqrt_dt = std::sqrt(std::exp2(static_cast<double>(-level)));
  return sqrt_dt * stream.normals(count);
}

Eigen::VectorXd aggregate_increments(const Eigen::VectorXd& fine) {
  const Eigen::Index half = fine.size() / 2;
  Eigen::VectorXd coarse(half);
  for (Eigen::Index i = 0; i < half; ++i) coarse[i] = fine[2 * i] + fine[2 * i + 1];
  return coarse;
}

double ou_milstein_recursion(double u, double sigma, const Eigen::VectorXd& increments) {
  const double dt = 1.0 / static_cast<double>(increments.size());
  double x = u;
  for (Eigen::Index i = 0; i < increments.size(); ++i)
    x += -x * dt + sigma * increments[i];
  return x;
}

Eigen::VectorXd coupled_increments(std::uint64_t seed, const NoiseKey& key, int model_level) {
  const int pair_level = static_cast<int>(key.level);
  if (model_level != pair_level && model_level != pair_level - 1)
    throw std::invalid_argument("coupled_increments: model level must be the key's pair level or one below");
  NoiseKey model_key = key;
  model_key.substream = Substream::model;
  const NoiseStream stream(seed, model_key);
  Eigen::VectorXd fine = brownian_increments(stream, pair_level);
  if (model_level == pair_level) return fine;
  return aggregate_increments(fine);
}

Eigen::VectorXd OuMilsteinHierarchy::evaluate(const Eigen::VectorXd& u, int model_level,
                                              const NoiseKey& key) const {
  const Eigen::VectorXd dw = coupled_increments(seed_, key, model_level);
  Eigen::VectorXd out(1);
  out[0] = ou_milstein_recursion(u[0], sigma_, dw);
  return out;
}

Eigen::VectorXd OuExactModel::evaluate(const Eigen::VectorXd& u, int /*model_level*/,
                                       const NoiseKey& key) const {
  NoiseKey model_key = key;
  model_key.substream = Substream::model;
  const NoiseStream stream(seed_, model_key);
  Eigen::VectorXd out(1);
  out[0] = ou_exact_step(u[0], sigma_, stream.normal(0));
  return out;
}

}  // namespace mlek
