#include "mlek/methods.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

namespace mlek {

namespace {

/// Cholesky solve of A X = B for symmetric positive definite A, with a
/// condition estimate in the error message when the factorization fails.
Eigen::MatrixXd spd_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* who) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()),
                                                      Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    throw std::runtime_error(std::string(who) + ": solve failed, eigenvalue range [" +
                             std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return llt.solve(b);
}

}  // namespace

StatLayout MethodSpec::stat_layout(Eigen::Index state_dim, Eigen::Index output_dim) const {
  StatLayout layout;
  layout.state_dim = state_dim;
  layout.output_dim = output_dim;
  switch (kind) {
    case MethodKind::enkf:
      layout.roles = {StatRole::output_cov};
      break;
    case MethodKind::denkf:
      layout.roles = {StatRole::mean_of_outputs, StatRole::output_cov};
      break;
    case MethodKind::eki:
      layout.roles = {StatRole::state_output_cross_cov, StatRole::output_cov};
      break;
    case MethodKind::eks:
      layout.roles = {StatRole::state_cov, StatRole::state_output_cross_cov};
      break;
  }
  return layout;
}

Eigen::Index MethodSpec::noise_dim(Eigen::Index state_dim) const {
  switch (kind) {
    case MethodKind::enkf:
    case MethodKind::eki:
      return noise_cov.rows();
    case MethodKind::eks:
      return state_dim;
    case MethodKind::denkf:
      return 0;
  }
  return 0;
}

const Eigen::VectorXd& MethodSpec::observation_at(int time_index) const {
  if (observations.empty()) throw std::invalid_argument("MethodSpec: no observations");
  if (kind == MethodKind::enkf || kind == MethodKind::denkf)
    return observations.at(static_cast<std::size_t>(time_index));
  return observations.front();
}

Eigen::MatrixXd kalman_gain(const Eigen::MatrixXd& cov_gg, const Eigen::MatrixXd& observation_map,
                            const Eigen::MatrixXd& noise_cov) {
  const Eigen::MatrixXd inner =
      observation_map * positive_part(cov_gg) * observation_map.transpose() + noise_cov;
  // K = theta H^T inner^-1, via inner K^T = H theta^T.
  return spd_solve(inner, observation_map * cov_gg.transpose(), "kalman_gain").transpose();
}

PsiOperator::PsiOperator(const MethodSpec& spec, const StatBundle& theta,
                         const Eigen::VectorXd& observation, double tau)
    : kind_(spec.kind), y_(observation) {
  switch (kind_) {
    case MethodKind::enkf: {
      gain_ = kalman_gain(theta.component(StatRole::output_cov), spec.observation_map,
                          spec.noise_cov);
      obs_map_ = spec.observation_map;
      noise_sqrt_ = psd_sqrt(spec.noise_cov);
      break;
    }
    case MethodKind::denkf: {
      gain_ = kalman_gain(theta.component(StatRole::output_cov), spec.observation_map,
                          spec.noise_cov);
      half_h_ = 0.5 * spec.observation_map;
      mean_g_ = theta.component(StatRole::mean_of_outputs);
      break;
    }
    case MethodKind::eki: {
      if (tau <= 0.0) throw std::invalid_argument("eki: tau must be positive");
      const Eigen::MatrixXd& cross = theta.component(StatRole::state_output_cross_cov);
      const Eigen::MatrixXd inner =
          tau * positive_part(theta.component(StatRole::output_cov)) + spec.noise_cov;
      coupling_ = tau * spd_solve(inner, cross.transpose(), "eki_update").transpose();
      noise_sqrt_ = psd_sqrt(spec.noise_cov) / std::sqrt(tau);
      break;
    }
    case MethodKind::eks: {
      if (tau <= 0.0) throw std::invalid_argument("eks: tau must be positive");
      const Eigen::MatrixXd& state_cov = theta.component(StatRole::state_cov);
      const Eigen::MatrixXd& cross = theta.component(StatRole::state_output_cross_cov);
      // theta1 Gamma0^-1 via Gamma0 X^T = theta1^T; likewise theta2 Gamma^-1.
      const Eigen::MatrixXd drift =
          spd_solve(spec.prior_cov, state_cov.transpose(), "eks_update").transpose();
      implicit_lu_.compute(Eigen::MatrixXd::Identity(state_cov.rows(), state_cov.cols()) +
                           tau * drift);
      coupling_ = tau * spd_solve(spec.noise_cov, cross.transpose(), "eks_update").transpose();
      noise_sqrt_ = psd_sqrt(2.0 * tau * positive_part(state_cov));
      break;
    }
  }
}

Eigen::VectorXd PsiOperator::apply(const Eigen::VectorXd& u, const Eigen::VectorXd& g_u,
                                   const Eigen::VectorXd& xi) const {
  if (kind_ != MethodKind::denkf && xi.size() != noise_sqrt_.cols())
    throw std::invalid_argument("PsiOperator: draw dimension does not match the noise dimension");
  switch (kind_) {
    case MethodKind::enkf:
      return g_u + gain_ * (y_ - obs_map_ * g_u + noise_sqrt_ * xi);
    case MethodKind::denkf:
      return g_u + gain_ * (y_ - half_h_ * (g_u + mean_g_));
    case MethodKind::eki:
      return u + coupling_ * (y_ - g_u + noise_sqrt_ * xi);
    case MethodKind::eks:
      return implicit_lu_.solve(u + coupling_ * (y_ - g_u)) + noise_sqrt_ * xi;
  }
  throw std::logic_error("unknown method kind");
}

Eigen::VectorXd enkf_update(const Eigen::VectorXd& u, const Eigen::VectorXd& g_u,
                            const StatBundle& theta, const UpdateContext& ctx,
                            const MethodSpec& spec) {
  return PsiOperator(spec, theta, spec.observation_at(ctx.time_index), ctx.tau)
      .apply(u, g_u, ctx.gaussian_draw);
}

Eigen::VectorXd denkf_update(const Eigen::VectorXd& u, const Eigen::VectorXd& g_u,
                             const StatBundle& theta, const UpdateContext& ctx,
                             const MethodSpec& spec) {
  return PsiOperator(spec, theta, spec.observation_at(ctx.time_index), ctx.tau)
      .apply(u, g_u, ctx.gaussian_draw);
}

Eigen::VectorXd eki_update(const Eigen::VectorXd& u, const Eigen::VectorXd& g_u,
                           const StatBundle& theta, const UpdateContext& ctx,
                           const MethodSpec& spec) {
  return PsiOperator(spec, theta, spec.observation_at(ctx.time_index), ctx.tau)
      .apply(u, g_u, ctx.gaussian_draw);
}

Eigen::VectorXd eks_update(const Eigen::VectorXd& u, const Eigen::VectorXd& g_u,
                           const StatBundle& theta, const UpdateContext& ctx,
                           const MethodSpec& spec) {
  return PsiOperator(spec, theta, spec.observation_at(ctx.time_index), ctx.tau)
      .apply(u, g_u, ctx.gaussian_draw);
}

double adaptive_tau(const Eigen::MatrixXd& outputs, const Eigen::VectorXd& y,
                    const Eigen::MatrixXd& noise_cov, double tau0, double tau_max, double reg) {
  if (outputs.cols() == 0) throw std::invalid_argument("adaptive_tau: empty ensemble");
  if (tau0 <= 0.0) throw std::invalid_argument("adaptive_tau: tau0 must be positive");
  const Eigen::MatrixXd centered = outputs.colwise() - outputs.rowwise().mean().eval();
  const Eigen::MatrixXd misfit =
      spd_solve(noise_cov, (outputs.colwise() - y).eval(), "adaptive_tau");
  // |D|_F^2 = tr((M M^T)(C C^T)) without forming the JxJ matrix D = M^T C / J.
  const Eigen::MatrixXd mm = misfit * misfit.transpose();
  const Eigen::MatrixXd cc = centered * centered.transpose();
  const double frob = std::sqrt(std::max(0.0, mm.cwiseProduct(cc).sum())) /
                      static_cast<double>(outputs.cols());
  return std::min(tau0 / (frob + reg), tau_max);
}

}  // namespace mlek
