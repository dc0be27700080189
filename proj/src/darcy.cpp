#include "mlek/darcy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>


namespace mlek {

namespace {

constexpr double kPi = std::numbers::pi;

/// Cholesky factorization of a symmetric positive definite banded matrix in
/// lower-band storage: band(k, j) = A(j + k, j) for 0 <= k <= half_band.
/// The 5-point system in row-major interior ordering has half-bandwidth equal
/// to the interior width, which keeps the factor dense only inside the band.
void banded_cholesky_factor(Eigen::MatrixXd& band) {
  const Eigen::Index n = band.cols();
  const Eigen::Index half_band = band.rows() - 1;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index first = std::max<Eigen::Index>(0, j - half_band);
    for (Eigen::Index i = first; i < j; ++i) {
      const double lji = band(j - i, i);
      if (lji == 0.0) continue;
      const Eigen::Index len = std::min(n - 1, i + half_band) - j + 1;
      band.col(j).head(len) -= lji * band.col(i).segment(j - i, len);
    }
    if (!(band(0, j) > 0.0))
      throw std::runtime_error("banded Cholesky: non-positive pivot at column " +
                               std::to_string(j));
    const double pivot = std::sqrt(band(0, j));
    const Eigen::Index reach = std::min(half_band, n - 1 - j);
    band(0, j) = pivot;
    band.col(j).segment(1, reach) /= pivot;
  }
}

void banded_cholesky_solve(const Eigen::MatrixXd& band, Eigen::VectorXd& x) {
  const Eigen::Index n = band.cols();
  const Eigen::Index half_band = band.rows() - 1;
  for (Eigen::Index j = 0; j < n; ++j) {  // forward: L z = b
    x[j] /= band(0, j);
    const Eigen::Index reach = std::min(half_band, n - 1 - j);
    if (reach > 0) x.segment(j + 1, reach) -= x[j] * band.col(j).segment(1, reach);
  }
  for (Eigen::Index j = n - 1; j >= 0; --j) {  // backward: L^T x = z
    const Eigen::Index reach = std::min(half_band, n - 1 - j);
    double acc = x[j];
    if (reach > 0) acc -= band.col(j).segment(1, reach).dot(x.segment(j + 1, reach));
    x[j] = acc / band(0, j);
  }
}

}  // namespace

double kl_eigenvalue(int k1, int k2, double tau) {
  const double q = kPi * kPi * (static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2) +
                   tau * tau;
  return 1.0 / (q * q);
}

double kl_basis(int k1, int k2, double x1, double x2) {
  const double c = (k1 == 0 || k2 == 0) ? std::numbers::sqrt2 : 2.0;
  return c * std::cos(kPi * k1 * x1) * std::cos(kPi * k2 * x2);
}

std::vector<std::array<int, 2>> kl_wavevectors(int count, double tau) {
  // Enumerate a box comfortably larger than needed, then order by lambda.
  const int box = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count)))) + 3;
  std::vector<std::array<int, 2>> all;
  for (int k1 = 0; k1 <= box; ++k1)
    for (int k2 = 0; k2 <= box; ++k2)
      if (k1 != 0 || k2 != 0) all.push_back({k1, k2});
  std::sort(all.begin(), all.end(), [tau](const auto& a, const auto& b) {
    const double la = kl_eigenvalue(a[0], a[1], tau);
    const double lb = kl_eigenvalue(b[0], b[1], tau);
    if (la != lb) return la > lb;
    return a < b;
  });
  all.resize(count);
  return all;
}

double kl_permeability(const Eigen::VectorXd& u, const std::vector<std::array<int, 2>>& modes,
                       double tau, double x1, double x2) {
  if (static_cast<std::size_t>(u.size()) != modes.size())
    throw std::invalid_argument("kl_permeability: parameter/mode count mismatch");
  double log_a = 0.0;
  for (std::size_t k = 0; k < modes.size(); ++k)
    log_a += u[static_cast<Eigen::Index>(k)] * std::sqrt(kl_eigenvalue(modes[k][0], modes[k][1], tau)) *
             kl_basis(modes[k][0], modes[k][1], x1, x2);
  return std::exp(log_a);
}

Eigen::MatrixXd darcy_solve_nodes(const Eigen::MatrixXd& a_nodes, const Eigen::MatrixXd& f_nodes) {
  const Eigen::Index n_nodes = a_nodes.rows();
  if (a_nodes.cols() != n_nodes || f_nodes.rows() != n_nodes || f_nodes.cols() != n_nodes)
    throw std::invalid_argument("darcy_solve_nodes: node grids must be square and equal-sized");
  const Eigen::Index cells = n_nodes - 1;
  if (cells < 2) throw std::invalid_argument("darcy_solve_nodes: need at least 2 cells");
  const Eigen::Index m = cells - 1;  // interior nodes per dimension
  const double h = 1.0 / static_cast<double>(cells);
  const double inv_h2 = 1.0 / (h * h);

  const auto idx = [m](Eigen::Index i, Eigen::Index j) { return (j - 1) * m + (i - 1); };
  const auto face = [&](Eigen::Index i0, Eigen::Index j0, Eigen::Index i1, Eigen::Index j1) {
    return 0.5 * (a_nodes(i0, j0) + a_nodes(i1, j1));
  };

  // Lower-band assembly, half-bandwidth m: offset 1 is the east neighbor,
  // offset m the north neighbor.
  Eigen::MatrixXd band = Eigen::MatrixXd::Zero(m + 1, m * m);
  Eigen::VectorXd x(m * m);
  for (Eigen::Index j = 1; j <= m; ++j) {
    for (Eigen::Index i = 1; i <= m; ++i) {
      const double ae = face(i, j, i + 1, j);
      const double aw = face(i - 1, j, i, j);
      const double an = face(i, j, i, j + 1);
      const double as = face(i, j - 1, i, j);
      const Eigen::Index col = idx(i, j);
      band(0, col) = inv_h2 * (ae + aw + an + as);
      if (i + 1 <= m) band(1, col) = -inv_h2 * ae;
      if (j + 1 <= m) band(m, col) = -inv_h2 * an;
      x[col] = f_nodes(i, j);
    }
  }

  try {
    banded_cholesky_factor(band);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error("darcy_solve_nodes: factorization failed on " +
                             std::to_string(cells) + "x" + std::to_string(cells) +
                             " grid: " + e.what());
  }
  banded_cholesky_solve(band, x);

  Eigen::MatrixXd p_nodes = Eigen::MatrixXd::Zero(n_nodes, n_nodes);
  for (Eigen::Index j = 1; j <= m; ++j)
    for (Eigen::Index i = 1; i <= m; ++i) p_nodes(i, j) = x[idx(i, j)];
  return p_nodes;
}

Eigen::MatrixXd darcy_solve_grid(const std::function<double(double, double)>& a,
                                 const std::function<double(double, double)>& f, int cells) {
  const Eigen::Index n = cells + 1;
  const double h = 1.0 / cells;
  Eigen::MatrixXd a_nodes(n, n), f_nodes(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      a_nodes(i, j) = a(i * h, j * h);
      f_nodes(i, j) = f(i * h, j * h);
    }
  return darcy_solve_nodes(a_nodes, f_nodes);
}

double bilinear_at(const Eigen::MatrixXd& nodes, double x1, double x2) {
  const Eigen::Index cells = nodes.rows() - 1;
  const double gx = x1 * cells;
  const double gy = x2 * cells;
  const Eigen::Index i0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(gx), cells - 1);
  const Eigen::Index j0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(gy), cells - 1);
  const double tx = gx - static_cast<double>(i0);
  const double ty = gy - static_cast<double>(j0);
  return (1 - tx) * (1 - ty) * nodes(i0, j0) + tx * (1 - ty) * nodes(i0 + 1, j0) +
         (1 - tx) * ty * nodes(i0, j0 + 1) + tx * ty * nodes(i0 + 1, j0 + 1);
}

double bicubic_at(const Eigen::MatrixXd& nodes, double x1, double x2) {
  const Eigen::Index cells = nodes.rows() - 1;
  if (cells < 3) throw std::invalid_argument("bicubic_at: need at least 3 cells");
  const auto cubic = [](const double p[4], double t) {
    return -(t - 1) * (t - 2) * (t - 3) / 6.0 * p[0] + t * (t - 2) * (t - 3) / 2.0 * p[1] -
           t * (t - 1) * (t - 3) / 2.0 * p[2] + t * (t - 1) * (t - 2) / 6.0 * p[3];
  };
  const double gx = x1 * cells;
  const double gy = x2 * cells;
  const Eigen::Index i0 =
      std::clamp<Eigen::Index>(static_cast<Eigen::Index>(gx) - 1, 0, cells - 3);
  const Eigen::Index j0 =
      std::clamp<Eigen::Index>(static_cast<Eigen::Index>(gy) - 1, 0, cells - 3);
  double column[4];
  for (int c = 0; c < 4; ++c) {
    double row[4];
    for (int r = 0; r < 4; ++r) row[r] = nodes(i0 + r, j0 + c);
    column[c] = cubic(row, gx - static_cast<double>(i0));
  }
  return cubic(column, gy - static_cast<double>(j0));
}

Eigen::VectorXd observe_lattice(const Eigen::MatrixXd& p_nodes) {
  Eigen::VectorXd out(49);
  for (int j = 1; j <= 7; ++j)
    for (int i = 1; i <= 7; ++i)
      out[(j - 1) * 7 + (i - 1)] = bicubic_at(p_nodes, i / 8.0, j / 8.0);
  return out;
}

DarcyHierarchy::DarcyHierarchy(const DarcyParams& params)
    : params_(params), modes_(kl_wavevectors(params.num_modes, params.kl_tau)) {}

int DarcyHierarchy::grid_cells(int level) const {
  const double m = std::exp2((params_.grid_offset + level) / 4.0);
  return std::max(2, static_cast<int>(std::llround(m)));
}

Eigen::VectorXd DarcyHierarchy::evaluate(const Eigen::VectorXd& u, int model_level,
                                         const NoiseKey& /*key*/) const {
  const int cells = grid_cells(model_level);
  const Eigen::Index n = cells + 1;
  const double h = 1.0 / cells;

  // log a at the nodes via per-axis cosine tables: 16 rank-1 terms.
  int max_k = 0;
  for (const auto& k : modes_) max_k = std::max({max_k, k[0], k[1]});
  Eigen::MatrixXd cos_table(max_k + 1, n);
  for (int k = 0; k <= max_k; ++k)
    for (Eigen::Index i = 0; i < n; ++i) cos_table(k, i) = std::cos(kPi * k * (i * h));

  Eigen::MatrixXd log_a = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < modes_.size(); ++k) {
    const double c = (modes_[k][0] == 0 || modes_[k][1] == 0) ? std::numbers::sqrt2 : 2.0;
    const double w = u[static_cast<Eigen::Index>(k)] *
                     std::sqrt(kl_eigenvalue(modes_[k][0], modes_[k][1], params_.kl_tau)) * c;
    log_a.noalias() +=
        w * (cos_table.row(modes_[k][0]).transpose() * cos_table.row(modes_[k][1]));
  }

  Eigen::MatrixXd f_nodes(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) f_nodes(i, j) = 1000.0 * std::exp(i * h + j * h);

  try {
    const Eigen::MatrixXd p = darcy_solve_nodes(log_a.array().exp().matrix(), f_nodes);
    return observe_lattice(p);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error("darcy level " + std::to_string(model_level) + ": " + e.what());
  }
}

}  // namespace mlek
