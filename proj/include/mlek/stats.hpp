#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mlek {

/// Ensembles are dense matrices with one particle per column.
///
/// sample_mean / sample_cov accept any Eigen expression; results are plain
/// dense matrices of the expression's scalar type.

template <class Derived>
Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> sample_mean(
    const Eigen::MatrixBase<Derived>& ensemble) {
  if (ensemble.cols() == 0) throw std::invalid_argument("empty ensemble");
  return ensemble.rowwise().mean();
}

/// Unbiased sample (cross-)covariance with divisor J-1. Columns of `a` and
/// `b` must be pairwise aligned realizations.
template <class DerivedA, class DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> sample_cov(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Eigen::Index count = a.cols();
  if (count < 2) throw std::invalid_argument("degenerate covariance: need at least 2 particles");
  if (b.cols() != count)
    throw std::invalid_argument("degenerate covariance: mismatched particle counts");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> ca =
      a.derived().colwise() - a.derived().rowwise().mean().eval();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cb =
      b.derived().colwise() - b.derived().rowwise().mean().eval();
  return (ca * cb.transpose()) / static_cast<Scalar>(count - 1);
}

/// Relative asymmetry |M - M^T|_max / |M|_max (0 for an all-zero matrix).
double relative_asymmetry(const Eigen::MatrixXd& m);

/// Eigenvalue clipping: keeps nonnegative eigenpairs exactly, drops negative
/// ones. Identity on PSD inputs up to eigensolver tolerance; idempotent.
/// The input is symmetrized with (M + M^T)/2 before decomposition; asymmetry
/// beyond `sym_tol` (relative to the largest entry) is an error.
Eigen::MatrixXd positive_part(const Eigen::MatrixXd& m, double sym_tol = 1e-12);

/// Symmetric square root of a PSD matrix: returns S with S*S = M.
/// Eigenvalues in [-psd_tol*lambda_max, 0) are treated as rounding and
/// clamped; anything more negative is an error.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double sym_tol = 1e-12,
                         double psd_tol = 1e-10);

/// Roles a statistic component can play in a method's interaction term.
enum class StatRole {
  mean_of_outputs,          // E(g(u)),    d_g x 1
  output_cov,               // C(g(u)),    d_g x d_g
  state_output_cross_cov,   // C(u, g(u)), d_u x d_g
  state_cov,                // C(u),       d_u x d_u
};

/// Shape descriptor shared by every bundle combined in one run.
struct StatLayout {
  std::vector<StatRole> roles;
  Eigen::Index state_dim = 0;
  Eigen::Index output_dim = 0;

  bool operator==(const StatLayout&) const = default;
  std::pair<Eigen::Index, Eigen::Index> component_shape(std::size_t i) const;
};

/// Tuple of interaction statistics, closed under + and - so level
/// contributions can be telescoped. Components keep their role's shape;
/// differences of covariances may be indefinite and are repaired only inside
/// the method updates, never here.
struct StatBundle {
  StatLayout layout;
  std::vector<Eigen::MatrixXd> components;

  StatBundle& operator+=(const StatBundle& other);
  StatBundle& operator-=(const StatBundle& other);

  friend StatBundle operator+(StatBundle lhs, const StatBundle& rhs) { return lhs += rhs; }
  friend StatBundle operator-(StatBundle lhs, const StatBundle& rhs) { return lhs -= rhs; }

  const Eigen::MatrixXd& component(StatRole role) const;
};

/// Sample statistic of one subensemble: particles and their model outputs,
/// one column per particle, assembled per the layout. Self-covariances are
/// symmetrized on construction.
StatBundle compute_stat(const StatLayout& layout, const Eigen::MatrixXd& particles,
                        const Eigen::MatrixXd& outputs);

/// Per-level cached model outputs feeding the multilevel statistic. Level 0
/// has fine outputs only; levels >= 1 carry the fine member's outputs under
/// the level-l model and the coarse member's under the level-(l-1) model.
struct LevelStats {
  Eigen::MatrixXd fine_particles;    // d_u x J_l
  Eigen::MatrixXd fine_outputs;      // d_g x J_l
  Eigen::MatrixXd coarse_particles;  // empty at level 0
  Eigen::MatrixXd coarse_outputs;    // empty at level 0
};

/// The telescoped multilevel sample statistic: the level-0 statistic plus the
/// per-level fine-minus-coarse corrections.
StatBundle ml_statistic(const StatLayout& layout, const std::vector<LevelStats>& levels);

}  // namespace mlek
