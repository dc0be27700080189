#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mlek/stats.hpp"

namespace mlek {

enum class MethodKind { enkf, denkf, eki, eks };

/// Step-size schedule for the iterative methods (EKI/EKS). Filtering methods
/// take unit steps and use `none`.
struct StepSchedule {
  enum class Kind { none, fixed, adaptive } kind = Kind::none;
  std::vector<double> taus;  // fixed: tau for step n (last value repeats)
  double tau0 = 1.0;
  double tau_max = 10.0;
};

/// Parameters of one ensemble Kalman method. Filtering methods (EnKF, DEnKF)
/// observe through a linear map H and consume one observation per time step;
/// the inversion methods (EKI, EKS) act directly in output space on a single
/// observation.
struct MethodSpec {
  MethodKind kind = MethodKind::enkf;
  Eigen::MatrixXd observation_map;          // H (filtering only)
  Eigen::MatrixXd noise_cov;                // Gamma, positive definite
  Eigen::MatrixXd prior_cov;                // Gamma_0 (EKS only)
  std::vector<Eigen::VectorXd> observations;  // filtering: y_1..y_N; inversion: single y
  StepSchedule step_schedule;

  StatLayout stat_layout(Eigen::Index state_dim, Eigen::Index output_dim) const;

  /// Dimension of the update noise xi: observation space for EnKF/EKI,
  /// state space for EKS, none for DEnKF.
  Eigen::Index noise_dim(Eigen::Index state_dim) const;

  /// Observation consumed by the step with time index n (y_{n+1} for
  /// filtering; the single y for inversion).
  const Eigen::VectorXd& observation_at(int time_index) const;
};

struct UpdateContext {
  int time_index = 0;
  double tau = 1.0;
  Eigen::VectorXd gaussian_draw;  // xi ~ N(0, I), dimension per noise_dim()
};

/// Multilevel-safe Kalman gain K = theta H^T (H I+(theta) H^T + Gamma)^-1.
/// The numerator keeps theta unclipped; only the inner solve sees the PSD
/// repair, so for PSD theta this is the textbook gain.
Eigen::MatrixXd kalman_gain(const Eigen::MatrixXd& cov_gg, const Eigen::MatrixXd& observation_map,
                            const Eigen::MatrixXd& noise_cov);

/// One step's update map Psi with everything that does not depend on the
/// individual particle precomputed (gain, factorizations, noise square
/// roots). All particles of a step share one operator since they share the
/// statistic; apply() is a pure function of (u, g_u, xi).
class PsiOperator {
 public:
  PsiOperator(const MethodSpec& spec, const StatBundle& theta, const Eigen::VectorXd& observation,
              double tau);

  Eigen::VectorXd apply(const Eigen::VectorXd& u, const Eigen::VectorXd& g_u,
                        const Eigen::VectorXd& xi) const;

 private:
  MethodKind kind_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd gain_;          // K (EnKF/DEnKF)
  Eigen::MatrixXd obs_map_;       // H (EnKF)
  Eigen::MatrixXd half_h_;        // H/2 (DEnKF)
  Eigen::VectorXd mean_g_;        // E(g(u)) (DEnKF)
  Eigen::MatrixXd noise_sqrt_;    // sqrt(Gamma) (EnKF), sqrt(Gamma/tau) (EKI), sqrt(2 tau I+(theta1)) (EKS)
  Eigen::MatrixXd coupling_;      // tau C(u,g)(tau I+(C(g)) + Gamma)^-1 (EKI); tau theta2 Gamma^-1 (EKS)
  Eigen::PartialPivLU<Eigen::MatrixXd> implicit_lu_;  // I + tau theta1 Gamma0^-1 (EKS)
};

// Per-particle update maps. Each consumes theta only through its method's
// declared layout. These construct a PsiOperator internally; drivers that
// update a whole ensemble should build the operator once per step instead.

Eigen::VectorXd enkf_update(const Eigen::VectorXd& u, const Eigen::VectorXd& g_u,
                            const StatBundle& theta, const UpdateContext& ctx,
                            const MethodSpec& spec);
Eigen::VectorXd denkf_update(const Eigen::VectorXd& u, const Eigen::VectorXd& g_u,
                             const StatBundle& theta, const UpdateContext& ctx,
                             const MethodSpec& spec);
Eigen::VectorXd eki_update(const Eigen::VectorXd& u, const Eigen::VectorXd& g_u,
                           const StatBundle& theta, const UpdateContext& ctx,
                           const MethodSpec& spec);
Eigen::VectorXd eks_update(const Eigen::VectorXd& u, const Eigen::VectorXd& g_u,
                           const StatBundle& theta, const UpdateContext& ctx,
                           const MethodSpec& spec);

/// Adaptive step size tau = tau0 / (|D|_F + reg) with the mean-field-scaled
/// interaction matrix D_jk = <g(u^k) - mean_g, Gamma^-1 (g(u^j) - y)> / J,
/// capped at tau_max. `outputs` holds one model output per column. The 1/J
/// keeps tau independent of the ensemble size.
double adaptive_tau(const Eigen::MatrixXd& outputs, const Eigen::VectorXd& y,
                    const Eigen::MatrixXd& noise_cov, double tau0, double tau_max = 10.0,
                    double reg = 1e-10);

}  // namespace mlek
