#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "mlek/stats.hpp"

using namespace mlek;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937& gen, int rows, int cols) {
  std::normal_distribution<double> dist;
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = dist(gen);
  return m;
}

Eigen::MatrixXd random_symmetric(std::mt19937& gen, int n) {
  const Eigen::MatrixXd m = random_matrix(gen, n, n);
  return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd random_psd(std::mt19937& gen, int n) {
  const Eigen::MatrixXd m = random_matrix(gen, n, n);
  return m * m.transpose();
}

/// Brute-force double-loop (cross-)covariance, the oracle for sample_cov.
Eigen::MatrixXd cov_oracle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::Index count = a.cols();
  Eigen::VectorXd ma = Eigen::VectorXd::Zero(a.rows());
  Eigen::VectorXd mb = Eigen::VectorXd::Zero(b.rows());
  for (Eigen::Index j = 0; j < count; ++j) {
    ma += a.col(j);
    mb += b.col(j);
  }
  ma /= static_cast<double>(count);
  mb /= static_cast<double>(count);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < count; ++j)
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index s = 0; s < b.rows(); ++s)
        c(r, s) += (a(r, j) - ma[r]) * (b(s, j) - mb[s]);
  return c / static_cast<double>(count - 1);
}

/// Independent eigendecomposition for the positive_part oracle: classical
/// cyclic Jacobi rotations, no Eigen solver involved.
void jacobi_eigen(Eigen::MatrixXd a, Eigen::VectorXd& values, Eigen::MatrixXd& vectors) {
  const int n = static_cast<int>(a.rows());
  vectors = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-26) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(n, n);
        rot(p, p) = c;
        rot(q, q) = c;
        rot(p, q) = s;
        rot(q, p) = -s;
        a = rot.transpose() * a * rot;
        vectors = vectors * rot;
      }
    }
  }
  values = a.diagonal();
}

Eigen::MatrixXd positive_part_oracle(const Eigen::MatrixXd& m) {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  jacobi_eigen(0.5 * (m + m.transpose()), values, vectors);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  for (Eigen::Index k = 0; k < values.size(); ++k)
    if (values[k] >= 0.0) out += values[k] * vectors.col(k) * vectors.col(k).transpose();
  return out;
}

double spectral_norm_sym(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

StatLayout eks_layout(Eigen::Index d_u, Eigen::Index d_g) {
  return {{StatRole::state_cov, StatRole::state_output_cross_cov}, d_u, d_g};
}

}  // namespace

TEST_CASE("sample_mean basics") {
  Eigen::MatrixXd one(1, 1);
  one << 3.0;
  CHECK(sample_mean(one)(0) == 3.0);

  Eigen::VectorXd u(2);
  u << 1.5, -2.0;
  Eigen::MatrixXd copies = u.replicate(1, 7);
  CHECK(sample_mean(copies).isApprox(u, 1e-15));

  Eigen::MatrixXd three(1, 3);
  three << 1.0, 2.0, 3.0;
  CHECK(sample_mean(three)(0) == doctest::Approx(2.0).epsilon(1e-15));

  Eigen::MatrixXd empty(2, 0);
  CHECK_THROWS_WITH_AS(sample_mean(empty), "empty ensemble", std::invalid_argument);
}

TEST_CASE("sample_cov basics and oracle") {
  std::mt19937 gen(11);

  Eigen::VectorXd u(3);
  u << 1.0, 2.0, 3.0;
  const Eigen::MatrixXd copies = u.replicate(1, 5);
  CHECK(sample_cov(copies, copies).cwiseAbs().maxCoeff() == 0.0);

  Eigen::MatrixXd two(1, 2);
  two << -1.0, 1.0;
  CHECK(sample_cov(two, two)(0, 0) == doctest::Approx(2.0).epsilon(1e-15));

  const Eigen::MatrixXd ens = random_matrix(gen, 3, 5);
  CHECK((sample_cov(ens, ens) - cov_oracle(ens, ens)).cwiseAbs().maxCoeff() < 1e-12);

  const Eigen::MatrixXd other = random_matrix(gen, 2, 5);
  CHECK((sample_cov(ens, other) - cov_oracle(ens, other)).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::MatrixXd single(2, 1);
  single << 1.0, 2.0;
  CHECK_THROWS_AS(sample_cov(single, single), std::invalid_argument);
  CHECK_THROWS_AS(sample_cov(ens, random_matrix(gen, 3, 4)), std::invalid_argument);
}

TEST_CASE("self-covariance is PSD for random ensembles") {
  std::mt19937 gen(22);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + trial % 5;
    const int count = 2 + trial % 9;
    const Eigen::MatrixXd ens = random_matrix(gen, d, count);
    const Eigen::MatrixXd c = sample_cov(ens, ens);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (c + c.transpose()),
                                                      Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = std::max(es.eigenvalues().maxCoeff(), 0.0);
    CHECK(lo >= -1e-10 * std::max(hi, 1.0));
  }
}

TEST_CASE("positive_part examples and oracle") {
  std::mt19937 gen(33);

  const Eigen::MatrixXd psd = random_psd(gen, 4);
  CHECK((positive_part(psd) - psd).cwiseAbs().maxCoeff() < 1e-12 * psd.cwiseAbs().maxCoeff());

  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(2, 2);
  diag(0, 0) = 1.0;
  diag(1, 1) = -1.0;
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(2, 2);
  expected(0, 0) = 1.0;
  CHECK((positive_part(diag) - expected).cwiseAbs().maxCoeff() < 1e-14);

  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd m = random_symmetric(gen, 4);
    CHECK((positive_part(m) - positive_part_oracle(m)).cwiseAbs().maxCoeff() < 1e-10);
  }

  Eigen::MatrixXd skew = Eigen::MatrixXd::Zero(2, 2);
  skew(0, 1) = 1.0;
  CHECK_THROWS_AS(positive_part(skew), std::invalid_argument);
}

TEST_CASE("positive_part is idempotent and PSD") {
  std::mt19937 gen(44);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd m = random_symmetric(gen, 5);
    const Eigen::MatrixXd once = positive_part(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(once, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()));
    CHECK((positive_part(once) - once).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("I+ is the nearest-PSD projection bound") {
  // For PSD A and symmetric B: |B - I+(B)|_2 <= |B - A|_2.
  std::mt19937 gen(55);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = trial % 2 == 0 ? 2 : 5;
    const Eigen::MatrixXd b = random_symmetric(gen, n);
    const Eigen::MatrixXd a = random_psd(gen, n);
    CHECK(spectral_norm_sym(b - positive_part(b)) <= spectral_norm_sym(b - a) + 1e-12);
  }
}

TEST_CASE("psd_sqrt examples and reconstruction") {
  std::mt19937 gen(66);

  CHECK((psd_sqrt(Eigen::MatrixXd::Identity(3, 3)) - Eigen::MatrixXd::Identity(3, 3))
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(2, 2);
  diag(0, 0) = 4.0;
  diag(1, 1) = 9.0;
  Eigen::MatrixXd root = Eigen::MatrixXd::Zero(2, 2);
  root(0, 0) = 2.0;
  root(1, 1) = 3.0;
  CHECK((psd_sqrt(diag) - root).cwiseAbs().maxCoeff() < 1e-12);

  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd m = random_psd(gen, 5);
    const Eigen::MatrixXd s = psd_sqrt(m);
    CHECK((s * s - m).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff()));
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-12 * s.cwiseAbs().maxCoeff());
  }

  Eigen::MatrixXd negative = -Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_WITH_AS(psd_sqrt(negative),
                       doctest::Contains("not PSD"), std::invalid_argument);
  CHECK(psd_sqrt(Eigen::MatrixXd::Zero(3, 3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("psd_sqrt Lipschitz bound") {
  // |sqrt(M1) - sqrt(M2)|_2 <= sqrt(2/mu) |M1 - M2|_2 when M1 >= mu I, M2 >= 0.
  std::mt19937 gen(77);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 3 + trial % 3;
    const double mu = 0.5;
    const Eigen::MatrixXd m1 = random_psd(gen, n) + mu * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd m2 = random_psd(gen, n);
    const double lhs = spectral_norm_sym(psd_sqrt(m1) - psd_sqrt(m2));
    const double rhs = std::sqrt(2.0 / mu) * spectral_norm_sym(m1 - m2);
    CHECK(lhs <= rhs + 1e-10);
  }
}

TEST_CASE("StatBundle arithmetic and layout checks") {
  std::mt19937 gen(88);
  const StatLayout layout = eks_layout(3, 2);
  const Eigen::MatrixXd p1 = random_matrix(gen, 3, 6), g1 = random_matrix(gen, 2, 6);
  const Eigen::MatrixXd p2 = random_matrix(gen, 3, 6), g2 = random_matrix(gen, 2, 6);

  const StatBundle a = compute_stat(layout, p1, g1);
  const StatBundle b = compute_stat(layout, p2, g2);
  const StatBundle sum = a + b;
  CHECK((sum.components[0] - (a.components[0] + b.components[0])).cwiseAbs().maxCoeff() == 0.0);
  const StatBundle back = sum - b;
  CHECK((back.components[1] - a.components[1]).cwiseAbs().maxCoeff() < 1e-14);

  StatBundle other = compute_stat(eks_layout(3, 2), p1, g1);
  other.layout.output_dim = 5;
  CHECK_THROWS_WITH_AS(a + other, doctest::Contains("layout mismatch"), std::invalid_argument);

  CHECK_THROWS_AS(compute_stat(layout, random_matrix(gen, 2, 6), g1), std::invalid_argument);
}

TEST_CASE("ml_statistic base case and telescoping collapse") {
  std::mt19937 gen(99);
  const StatLayout layout = eks_layout(2, 2);

  std::vector<LevelStats> levels(1);
  levels[0].fine_particles = random_matrix(gen, 2, 8);
  levels[0].fine_outputs = random_matrix(gen, 2, 8);
  const StatBundle base = compute_stat(layout, levels[0].fine_particles, levels[0].fine_outputs);
  const StatBundle ml0 = ml_statistic(layout, levels);
  for (std::size_t c = 0; c < base.components.size(); ++c)
    CHECK((ml0.components[c] - base.components[c]).cwiseAbs().maxCoeff() == 0.0);

  // Identical fine/coarse subensembles under a constant hierarchy: the
  // telescoped terms cancel to summation-order rounding.
  levels.resize(4);
  for (std::size_t l = 1; l < 4; ++l) {
    levels[l].fine_particles = random_matrix(gen, 2, 5);
    levels[l].fine_outputs = random_matrix(gen, 2, 5);
    levels[l].coarse_particles = levels[l].fine_particles;
    levels[l].coarse_outputs = levels[l].fine_outputs;
  }
  const StatBundle collapsed = ml_statistic(layout, levels);
  for (std::size_t c = 0; c < base.components.size(); ++c) {
    const double scale = std::max(1.0, base.components[c].cwiseAbs().maxCoeff());
    CHECK((collapsed.components[c] - base.components[c]).cwiseAbs().maxCoeff() <= 1e-12 * scale);
  }
}

TEST_CASE("ml_statistic equals the explicitly expanded telescoped sum") {
  std::mt19937 gen(111);
  const StatLayout layout = eks_layout(2, 3);

  std::vector<LevelStats> levels(3);
  levels[0].fine_particles = random_matrix(gen, 2, 7);
  levels[0].fine_outputs = random_matrix(gen, 3, 7);
  for (std::size_t l = 1; l < 3; ++l) {
    levels[l].fine_particles = random_matrix(gen, 2, 4);
    levels[l].fine_outputs = random_matrix(gen, 3, 4);
    levels[l].coarse_particles = random_matrix(gen, 2, 4);
    levels[l].coarse_outputs = random_matrix(gen, 3, 4);
  }

  // Expand term by term with the double-loop oracles.
  const auto mean_oracle = [](const Eigen::MatrixXd& m) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m.rows());
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += m.col(j);
    return Eigen::MatrixXd(out / static_cast<double>(m.cols()));
  };
  (void)mean_oracle;
  Eigen::MatrixXd cov_uu = cov_oracle(levels[0].fine_particles, levels[0].fine_particles);
  Eigen::MatrixXd cov_ug = cov_oracle(levels[0].fine_particles, levels[0].fine_outputs);
  for (std::size_t l = 1; l < 3; ++l) {
    cov_uu += cov_oracle(levels[l].fine_particles, levels[l].fine_particles) -
              cov_oracle(levels[l].coarse_particles, levels[l].coarse_particles);
    cov_ug += cov_oracle(levels[l].fine_particles, levels[l].fine_outputs) -
              cov_oracle(levels[l].coarse_particles, levels[l].coarse_outputs);
  }

  const StatBundle ml = ml_statistic(layout, levels);
  CHECK((ml.component(StatRole::state_cov) - cov_uu).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ml.component(StatRole::state_output_cross_cov) - cov_ug).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Monte Carlo error of the sample mean decays like J^-1/2") {
  std::mt19937 gen(123);
  std::normal_distribution<double> dist;
  const int replications = 400;
  std::vector<double> log_j, log_err;
  for (int p = 4; p <= 14; p += 2) {
    const int count = 1 << p;
    double sq = 0.0;
    for (int r = 0; r < replications; ++r) {
      double sum = 0.0;
      for (int j = 0; j < count; ++j) sum += dist(gen);
      const double mean = sum / count;
      sq += mean * mean;
    }
    log_j.push_back(std::log2(static_cast<double>(count)));
    log_err.push_back(0.5 * std::log2(sq / replications));
  }
  // Least-squares slope of log2(RMS error) against log2(J).
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(log_j.size());
  for (std::size_t i = 0; i < log_j.size(); ++i) {
    sx += log_j[i];
    sy += log_err[i];
    sxx += log_j[i] * log_j[i];
    sxy += log_j[i] * log_err[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope == doctest::Approx(-0.5).epsilon(0.2));
  CHECK(std::abs(slope + 0.5) < 0.1);
}
