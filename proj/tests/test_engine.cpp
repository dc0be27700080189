#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mlek/engine.hpp"
#include "mlek/models.hpp"

using namespace mlek;

namespace {

MethodSpec denkf_spec(const std::vector<double>& observations, double noise_var = 0.04) {
  MethodSpec spec;
  spec.kind = MethodKind::denkf;
  spec.observation_map = Eigen::MatrixXd::Identity(1, 1);
  spec.noise_cov = noise_var * Eigen::MatrixXd::Identity(1, 1);
  for (double y : observations) spec.observations.push_back(Eigen::VectorXd::Constant(1, y));
  return spec;
}

InitialLaw scalar_init(double mean, double std) {
  InitialLaw init;
  init.mean = Eigen::VectorXd::Constant(1, mean);
  init.sqrt_cov = std * Eigen::MatrixXd::Identity(1, 1);
  return init;
}

bool identical_results(const RunResult& a, const RunResult& b) {
  return a.qoi.size() == b.qoi.size() && (a.qoi - b.qoi).cwiseAbs().maxCoeff() == 0.0 &&
         a.total_cost == b.total_cost && a.eval_counts == b.eval_counts &&
         a.steps_taken == b.steps_taken;
}

/// Test hierarchy whose levels all evaluate the same map u -> u/2 + W(1),
/// driven by the shared coupled path: G_l == G_0 for every l.
class ConstantHierarchy : public ModelHierarchy {
 public:
  explicit ConstantHierarchy(std::uint64_t seed) : seed_(seed) {}
  int state_dim() const override { return 1; }
  int output_dim() const override { return 1; }
  double beta() const override { return 2.0; }
  double gamma_rate() const override { return 1.0; }
  bool stochastic() const override { return true; }
  Eigen::VectorXd evaluate(const Eigen::VectorXd& u, int /*model_level*/,
                           const NoiseKey& key) const override {
    Eigen::VectorXd inc = coupled_increments(seed_, key, static_cast<int>(key.level));
    while (inc.size() > 1) inc = aggregate_increments(inc);
    Eigen::VectorXd out(1);
    out[0] = 0.5 * u[0] + inc[0];
    return out;
  }

 private:
  std::uint64_t seed_;
};

}  // namespace

TEST_CASE("multilevel parameter selection") {
  CHECK(select_params_ml(0.1, 2.0, 1.0, 1.0).level == 3);

  // beta > gamma: J_0 = ceil(J_const 2^(beta L)).
  const MlParams top = select_params_ml(0.1, 2.0, 1.0, 1.5);
  CHECK(top.ensemble_sizes[0] == static_cast<int>(std::ceil(1.5 * std::exp2(2.0 * 3))));

  // beta = gamma = 1 at eps = 2^-4: L = 8 with the L^2 2^(beta L) factor.
  const MlParams mid = select_params_ml(0.0625, 1.0, 1.0, 1.0);
  CHECK(mid.level == 8);
  REQUIRE(mid.ensemble_sizes.size() == 9);
  for (int l = 0; l <= 8; ++l) {
    const double expected = std::exp2(-l) * 64.0 * 256.0;
    CHECK(mid.ensemble_sizes[l] == static_cast<int>(std::ceil(expected)));
  }

  // Sizes are clamped from below at 2.
  const MlParams tiny = select_params_ml(0.03125, 2.0, 1.0, 1e-4);
  CHECK(tiny.ensemble_sizes.back() == 2);

  CHECK_THROWS_AS(select_params_ml(1.0, 2.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("single-level parameter selection") {
  const SlParams a = select_params_sl(0.1, 2.0, 1.0, 1.0);
  CHECK(a.level == 3);
  CHECK(a.ensemble_size == 100);

  const SlParams b = select_params_sl(0.5, 1.0, 1.0, 1.0);
  CHECK(b.level == 2);
  CHECK(b.ensemble_size == 4);

  const SlParams doubled = select_params_sl(0.1, 2.0, 1.0, 2.0);
  CHECK(doubled.ensemble_size == 200);

  CHECK_THROWS_AS(select_params_sl(1.5, 2.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("step budget") {
  StepBudget fixed;
  fixed.kind = StepBudget::Kind::fixed;
  fixed.fixed_steps = 10;
  CHECK(step_budget(0.5, fixed) == 10);

  StepBudget power;
  power.kind = StepBudget::Kind::power_law;
  power.n_const = 10.0;
  power.delta = 0.1;
  CHECK(step_budget(1e-3, power) == 20);

  power.delta = 0.0;
  CHECK(step_budget(1e-3, power) == 10);
  CHECK(step_budget(0.9, power) == 10);
}

TEST_CASE("zero steps returns the initial-ensemble statistic") {
  const OuMilsteinHierarchy hierarchy(0.5, 7);
  const MethodSpec spec = denkf_spec({0.0});
  RunConfig cfg;
  cfg.level = 0;
  cfg.ensemble_sizes = {16};
  cfg.num_steps = 0;
  cfg.seed = 7;
  cfg.init = scalar_init(1.0, 0.2);

  const RunResult res = run_single_level(spec, hierarchy, cfg);
  CHECK(res.steps_taken == 0);
  CHECK(res.total_cost == 0.0);

  // The QoI must be the mean of exactly the keyed initial draws.
  double expected = 0.0;
  for (int j = 0; j < 16; ++j)
    expected +=
        cfg.init.sample(cfg.seed, NoiseKey{0, static_cast<std::uint32_t>(j), 0, 0,
                                           Substream::init})[0];
  expected /= 16.0;
  CHECK(res.qoi[0] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("hand-executed DEnKF traces") {
  // Level 0 with sigma = 0: one explicit Euler step over dt = 1 sends every
  // state to zero, so covariances vanish and the run sticks at zero.
  {
    const OuMilsteinHierarchy hierarchy(0.0, 11);
    const MethodSpec spec = denkf_spec({0.5, -0.3});
    RunConfig cfg;
    cfg.level = 0;
    cfg.ensemble_sizes = {2};
    cfg.num_steps = 2;
    cfg.seed = 11;
    cfg.init = scalar_init(1.0, 0.3);
    const RunResult res = run_single_level(spec, hierarchy, cfg);
    CHECK(std::abs(res.qoi[0]) <= 1e-12);
  }

  // Level 1 with sigma = 0 is the deterministic map g(u) = u/4; two steps
  // recomputed with plain scalar arithmetic.
  {
    const double y1 = 0.5, y2 = -0.3, noise = 0.04;
    const OuMilsteinHierarchy hierarchy(0.0, 13);
    const MethodSpec spec = denkf_spec({y1, y2}, noise);
    RunConfig cfg;
    cfg.level = 1;
    cfg.ensemble_sizes = {2};
    cfg.num_steps = 2;
    cfg.seed = 13;
    cfg.init = scalar_init(1.0, 0.3);
    const RunResult res = run_single_level(spec, hierarchy, cfg);

    double a = cfg.init.sample(cfg.seed, NoiseKey{1, 0, 0, 0, Substream::init})[0];
    double b = cfg.init.sample(cfg.seed, NoiseKey{1, 1, 0, 0, Substream::init})[0];
    for (double y : {y1, y2}) {
      const double ga = a * 0.25, gb = b * 0.25;
      const double mean = 0.5 * (ga + gb);
      const double cov = (ga - mean) * (ga - mean) + (gb - mean) * (gb - mean);
      const double gain = cov / (cov + noise);
      a = ga + gain * (y - 0.5 * (ga + mean));
      b = gb + gain * (y - 0.5 * (gb + mean));
    }
    CHECK(res.qoi[0] == doctest::Approx(0.5 * (a + b)).epsilon(1e-12));
  }
}

TEST_CASE("same seed gives bit-identical results across thread counts") {
  const OuMilsteinHierarchy hierarchy(0.5, 31);
  MethodSpec spec = denkf_spec({0.9, 1.1, 0.7, 0.8});
  RunConfig cfg;
  cfg.level = 2;
  cfg.ensemble_sizes = {32, 8, 4};
  cfg.num_steps = 4;
  cfg.seed = 31;
  cfg.init = scalar_init(1.0, 0.2);

  cfg.threads = 1;
  const RunResult serial = run_multilevel(spec, hierarchy, cfg);
  cfg.threads = 4;
  const RunResult parallel = run_multilevel(spec, hierarchy, cfg);
  cfg.threads = 3;
  const RunResult odd = run_multilevel(spec, hierarchy, cfg);
  CHECK(identical_results(serial, parallel));
  CHECK(identical_results(serial, odd));

  // Repeated invocation with the identical config is also bitwise stable.
  cfg.threads = 1;
  CHECK(identical_results(serial, run_multilevel(spec, hierarchy, cfg)));
}

TEST_CASE("multilevel with L = 0 degenerates to single level bitwise") {
  const OuMilsteinHierarchy hierarchy(0.5, 17);
  const MethodSpec spec = denkf_spec({1.0, 0.9, 1.2});
  RunConfig cfg;
  cfg.level = 0;
  cfg.ensemble_sizes = {24};
  cfg.num_steps = 3;
  cfg.seed = 17;
  cfg.init = scalar_init(1.0, 0.2);

  const RunResult sl = run_single_level(spec, hierarchy, cfg);
  const RunResult ml = run_multilevel(spec, hierarchy, cfg);
  CHECK(identical_results(sl, ml));
}

TEST_CASE("constant hierarchy collapses to the level-0 estimator") {
  const ConstantHierarchy hierarchy(23);
  const MethodSpec spec = denkf_spec({1.0, 0.8, 1.1, 0.9});
  RunConfig cfg;
  cfg.level = 3;
  cfg.ensemble_sizes = {16, 8, 4, 2};
  cfg.num_steps = 4;
  cfg.seed = 23;
  cfg.init = scalar_init(1.0, 0.2);

  Eigen::MatrixXd final_fine0;
  bool pairs_identical = true;
  const StepObserver observer = [&](const StepInfo& info) {
    for (std::size_t l = 1; l < info.ensemble.levels.size(); ++l)
      pairs_identical =
          pairs_identical && (info.ensemble.levels[l].fine - info.ensemble.levels[l].coarse)
                                     .cwiseAbs()
                                     .maxCoeff() == 0.0;
    final_fine0 = info.ensemble.levels[0].fine;
  };
  const RunResult res = run_multilevel(spec, hierarchy, cfg, observer);

  CHECK(pairs_identical);
  CHECK(res.qoi[0] == doctest::Approx(final_fine0.row(0).mean()).epsilon(1e-14));
}

TEST_CASE("cost audit matches evaluation counts and level weights") {
  const OuMilsteinHierarchy hierarchy(0.5, 41);
  const MethodSpec spec = denkf_spec({1.0, 0.9});
  RunConfig cfg;
  cfg.level = 2;
  cfg.ensemble_sizes = {10, 5, 3};
  cfg.num_steps = 2;
  cfg.seed = 41;
  cfg.init = scalar_init(1.0, 0.2);

  const RunResult ml = run_multilevel(spec, hierarchy, cfg);
  // Level m is evaluated by its own fine block and level m+1's coarse block.
  REQUIRE(ml.eval_counts.size() == 3);
  CHECK(ml.eval_counts[0] == 2 * (10 + 5));
  CHECK(ml.eval_counts[1] == 2 * (5 + 3));
  CHECK(ml.eval_counts[2] == 2 * 3);
  double expected = 0.0;
  for (int m = 0; m <= 2; ++m)
    expected += static_cast<double>(ml.eval_counts[m]) * std::exp2(m);
  CHECK(ml.total_cost == expected);

  RunConfig slc = cfg;
  slc.level = 2;
  slc.ensemble_sizes = {10};
  const RunResult sl = run_single_level(spec, hierarchy, slc);
  REQUIRE(sl.eval_counts.size() == 3);
  CHECK(sl.eval_counts[2] == 2 * 10);
  CHECK(sl.total_cost == 2 * 10 * 4.0);
}

TEST_CASE("config validation errors") {
  const OuMilsteinHierarchy hierarchy(0.5, 3);
  const MethodSpec spec = denkf_spec({1.0});
  RunConfig cfg;
  cfg.level = 1;
  cfg.ensemble_sizes = {4};  // wrong: needs L+1 sizes
  cfg.num_steps = 1;
  cfg.init = scalar_init(1.0, 0.1);
  CHECK_THROWS_AS(run_multilevel(spec, hierarchy, cfg), std::invalid_argument);

  cfg.ensemble_sizes = {4, 1};  // J_1 below the covariance minimum
  CHECK_THROWS_AS(run_multilevel(spec, hierarchy, cfg), std::invalid_argument);

  cfg.ensemble_sizes = {4, 4};
  cfg.num_steps = 3;  // more steps than observations
  CHECK_THROWS_AS(run_multilevel(spec, hierarchy, cfg), std::runtime_error);
}

TEST_CASE("horizon stops iterative runs early") {
  // Fixed tau = 0.5 with horizon 1.0 allows exactly two steps.
  MethodSpec spec;
  spec.kind = MethodKind::eks;
  spec.noise_cov = Eigen::MatrixXd::Identity(1, 1);
  spec.prior_cov = Eigen::MatrixXd::Identity(1, 1);
  spec.observations = {Eigen::VectorXd::Constant(1, 1.0)};

  const OuMilsteinHierarchy hierarchy(0.5, 5);
  RunConfig cfg;
  cfg.level = 0;
  cfg.ensemble_sizes = {8};
  cfg.num_steps = 50;
  cfg.seed = 5;
  cfg.init = scalar_init(0.0, 1.0);
  cfg.horizon = 1.0;
  spec.step_schedule.kind = StepSchedule::Kind::fixed;
  spec.step_schedule.taus = {0.5};

  const RunResult res = run_single_level(spec, hierarchy, cfg);
  CHECK(res.steps_taken == 2);
}
