#pragma once

#include <array>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "mlek/models.hpp"

namespace mlek {

// --- Karhunen-Loeve log-permeability on [0,1]^2 ---
//
// log a(x, u) = sum_k u_k sqrt(lambda_k) phi_k(x) over the `count` wavevectors
// k in N^2 \ {(0,0)} with largest lambda_k, where
//   lambda_k = (pi^2 |k|^2 + tau^2)^-2,
//   phi_k(x) = c_k cos(pi k1 x1) cos(pi k2 x2),  c_k = sqrt(2) if k1 k2 = 0, else 2.

double kl_eigenvalue(int k1, int k2, double tau);
double kl_basis(int k1, int k2, double x1, double x2);

/// Wavevectors sorted by descending eigenvalue; ties (the symmetric pairs)
/// broken lexicographically on (k1, k2) so the index set is deterministic.
std::vector<std::array<int, 2>> kl_wavevectors(int count, double tau);

/// The permeability a(x, u) = exp of the truncated KL sum.
double kl_permeability(const Eigen::VectorXd& u, const std::vector<std::array<int, 2>>& modes,
                       double tau, double x1, double x2);

// --- Pressure solver: -div(a grad p) = f on [0,1]^2, p = 0 on the boundary ---

/// Conservative 5-point finite differences on an MxM cell grid. Inputs are
/// nodal values on the (M+1)x(M+1) lattice, entry (i, j) at x = (i/M, j/M);
/// face coefficients are arithmetic means of the adjacent node values of a.
/// Returns the nodal pressure field with the zero boundary included.
Eigen::MatrixXd darcy_solve_nodes(const Eigen::MatrixXd& a_nodes, const Eigen::MatrixXd& f_nodes);

/// Convenience overload sampling a and f at the nodes.
Eigen::MatrixXd darcy_solve_grid(const std::function<double(double, double)>& a,
                                 const std::function<double(double, double)>& f, int cells);

/// Bilinear interpolation of a nodal field at one point of [0,1]^2.
double bilinear_at(const Eigen::MatrixXd& nodes, double x1, double x2);

/// Bicubic (Lagrange, clamped 4x4 stencil) interpolation; needs at least 3
/// cells. Exact at nodes and for per-axis polynomials of degree <= 3.
double bicubic_at(const Eigen::MatrixXd& nodes, double x1, double x2);

/// The 49 observation values: p at the 7x7 interior lattice (i/8, j/8),
/// i, j in 1..7, ordered with the x index fastest. Sampling is bicubic so the
/// interpolation error stays subordinate to the scheme's O(h^2) error; the
/// low-order alternative leaks grid-dependent structure into the observations
/// that inversion runs amplify.
Eigen::VectorXd observe_lattice(const Eigen::MatrixXd& p_nodes);

struct DarcyParams {
  int grid_offset = 13;  // cells per dimension at level l: round(2^((offset + l)/4))
  double kl_tau = 3.0;
  int num_modes = 16;
};

/// Finite-difference hierarchy for the Darcy inverse problem, f(x) =
/// 1000 exp(x1 + x2). Deterministic; fine/coarse coupling is through the
/// shared parameter vector alone. beta = 1, gamma = 1/2.
class DarcyHierarchy : public ModelHierarchy {
 public:
  explicit DarcyHierarchy(const DarcyParams& params = {});

  int state_dim() const override { return params_.num_modes; }
  int output_dim() const override { return 49; }
  double beta() const override { return 1.0; }
  double gamma_rate() const override { return 0.5; }
  bool stochastic() const override { return false; }

  int grid_cells(int level) const;
  const std::vector<std::array<int, 2>>& modes() const { return modes_; }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& u, int model_level,
                           const NoiseKey& key) const override;

 private:
  DarcyParams params_;
  std::vector<std::array<int, 2>> modes_;
};

}  // namespace mlek
