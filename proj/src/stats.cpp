#include "mlek/stats.hpp"

#include <Eigen/Eigenvalues>

namespace mlek {

namespace {

Eigen::MatrixXd symmetrized_checked(const Eigen::MatrixXd& m, double sym_tol, const char* who) {
  if (m.rows() != m.cols())
    throw std::invalid_argument(std::string(who) + ": matrix is not square");
  const double scale = m.cwiseAbs().maxCoeff();
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > sym_tol * scale)
    throw std::invalid_argument(std::string(who) + ": matrix is not symmetric (relative asymmetry " +
                                std::to_string(scale > 0 ? asym / scale : asym) + ")");
  return 0.5 * (m + m.transpose());
}

}  // namespace

double relative_asymmetry(const Eigen::MatrixXd& m) {
  const double scale = m.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
}

Eigen::MatrixXd positive_part(const Eigen::MatrixXd& m, double sym_tol) {
  const Eigen::MatrixXd s = symmetrized_checked(m, sym_tol, "positive_part");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("positive_part: eigendecomposition failed");
  Eigen::VectorXd lambda = es.eigenvalues();
  for (Eigen::Index k = 0; k < lambda.size(); ++k)
    if (lambda[k] < 0.0) lambda[k] = 0.0;
  return es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double sym_tol, double psd_tol) {
  const Eigen::MatrixXd s = symmetrized_checked(m, sym_tol, "psd_sqrt");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("psd_sqrt: eigendecomposition failed");
  Eigen::VectorXd lambda = es.eigenvalues();
  const double lambda_max = std::max(lambda.maxCoeff(), 0.0);
  if (lambda.minCoeff() < -psd_tol * lambda_max)
    throw std::invalid_argument("psd_sqrt: not PSD (smallest eigenvalue " +
                                std::to_string(lambda.minCoeff()) + ")");
  for (Eigen::Index k = 0; k < lambda.size(); ++k)
    lambda[k] = std::sqrt(std::max(lambda[k], 0.0));
  return es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
}

std::pair<Eigen::Index, Eigen::Index> StatLayout::component_shape(std::size_t i) const {
  switch (roles.at(i)) {
    case StatRole::mean_of_outputs:
      return {output_dim, 1};
    case StatRole::output_cov:
      return {output_dim, output_dim};
    case StatRole::state_output_cross_cov:
      return {state_dim, output_dim};
    case StatRole::state_cov:
      return {state_dim, state_dim};
  }
  throw std::logic_error("unknown StatRole");
}

StatBundle& StatBundle::operator+=(const StatBundle& other) {
  if (!(layout == other.layout)) throw std::invalid_argument("StatBundle: layout mismatch");
  for (std::size_t i = 0; i < components.size(); ++i) components[i] += other.components[i];
  return *this;
}

StatBundle& StatBundle::operator-=(const StatBundle& other) {
  if (!(layout == other.layout)) throw std::invalid_argument("StatBundle: layout mismatch");
  for (std::size_t i = 0; i < components.size(); ++i) components[i] -= other.components[i];
  return *this;
}

const Eigen::MatrixXd& StatBundle::component(StatRole role) const {
  for (std::size_t i = 0; i < layout.roles.size(); ++i)
    if (layout.roles[i] == role) return components[i];
  throw std::invalid_argument("StatBundle: layout has no such component");
}

StatBundle compute_stat(const StatLayout& layout, const Eigen::MatrixXd& particles,
                        const Eigen::MatrixXd& outputs) {
  if (particles.rows() != layout.state_dim || outputs.rows() != layout.output_dim)
    throw std::invalid_argument("compute_stat: layout mismatch");
  if (particles.cols() != outputs.cols())
    throw std::invalid_argument("compute_stat: particle/output count mismatch");

  StatBundle bundle;
  bundle.layout = layout;
  bundle.components.reserve(layout.roles.size());
  for (StatRole role : layout.roles) {
    switch (role) {
      case StatRole::mean_of_outputs:
        bundle.components.emplace_back(sample_mean(outputs));
        break;
      case StatRole::output_cov: {
        Eigen::MatrixXd c = sample_cov(outputs, outputs);
        bundle.components.emplace_back(0.5 * (c + c.transpose()));
        break;
      }
      case StatRole::state_output_cross_cov:
        bundle.components.emplace_back(sample_cov(particles, outputs));
        break;
      case StatRole::state_cov: {
        Eigen::MatrixXd c = sample_cov(particles, particles);
        bundle.components.emplace_back(0.5 * (c + c.transpose()));
        break;
      }
    }
  }
  return bundle;
}

StatBundle ml_statistic(const StatLayout& layout, const std::vector<LevelStats>& levels) {
  if (levels.empty()) throw std::invalid_argument("ml_statistic: no levels");
  StatBundle acc = compute_stat(layout, levels[0].fine_particles, levels[0].fine_outputs);
  for (std::size_t l = 1; l < levels.size(); ++l) {
    const LevelStats& lev = levels[l];
    if (lev.fine_particles.cols() != lev.coarse_particles.cols())
      throw std::invalid_argument("ml_statistic: fine/coarse particle counts differ");
    acc += compute_stat(layout, lev.fine_particles, lev.fine_outputs);
    acc -= compute_stat(layout, lev.coarse_particles, lev.coarse_outputs);
  }
  return acc;
}

}  // namespace mlek
