#include "mlek/engine.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>

namespace mlek {

namespace {

/// Static fan-out over [0, n): contiguous chunks, one per worker, each index
/// handled exactly once. Results must be written to per-index slots so the
/// outcome is independent of the thread count.
void parallel_for(Eigen::Index n, int threads, const std::function<void(Eigen::Index)>& body) {
  if (threads <= 1 || n < 2) {
    for (Eigen::Index i = 0; i < n; ++i) body(i);
    return;
  }
  const int workers = static_cast<int>(std::min<Eigen::Index>(threads, n));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const Eigen::Index chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const Eigen::Index begin = w * chunk;
    const Eigen::Index end = std::min(n, begin + chunk);
    pool.emplace_back([&, w, begin, end] {
      try {
        for (Eigen::Index i = begin; i < end; ++i) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

double floor_guarded(double x) { return std::floor(x + 1e-9 * std::max(1.0, std::abs(x))); }
double ceil_guarded(double x) { return std::ceil(x - 1e-9 * std::max(1.0, std::abs(x))); }

int shared_level_count(double epsilon, double beta) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("parameter selection requires epsilon in (0, 1)");
  return static_cast<int>(floor_guarded(2.0 * std::log2(1.0 / epsilon) / beta));
}

double fixed_tau_at(const StepSchedule& schedule, int n) {
  if (schedule.taus.empty()) throw std::invalid_argument("fixed step schedule has no tau values");
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(n), schedule.taus.size() - 1);
  return schedule.taus[i];
}

struct CostAudit {
  std::vector<std::int64_t> counts;

  void record(int model_level, std::int64_t evaluations) {
    if (static_cast<std::size_t>(model_level) >= counts.size())
      counts.resize(static_cast<std::size_t>(model_level) + 1, 0);
    counts[static_cast<std::size_t>(model_level)] += evaluations;
  }

  double total(const ModelHierarchy& hierarchy) const {
    double cost = 0.0;
    for (std::size_t l = 0; l < counts.size(); ++l)
      cost += static_cast<double>(counts[l]) * hierarchy.cost_weight(static_cast<int>(l));
    return cost;
  }
};

struct Driver {
  const MethodSpec& method;
  const ModelHierarchy& hierarchy;
  const RunConfig& config;
  const StepObserver& observer;

  StatLayout layout;
  Eigen::Index noise_dim = 0;
  MultilevelEnsemble ensemble;
  std::vector<LevelStats> stats;  // particles + cached outputs per level
  CostAudit audit;

  Driver(const MethodSpec& m, const ModelHierarchy& h, const RunConfig& c, const StepObserver& o)
      : method(m), hierarchy(h), config(c), observer(o) {
    layout = method.stat_layout(hierarchy.state_dim(), hierarchy.output_dim());
    noise_dim = method.noise_dim(hierarchy.state_dim());
  }

  NoiseKey key(int level, Eigen::Index pair, int step, Substream sub) const {
    NoiseKey k;
    k.level = static_cast<std::uint32_t>(level);
    k.pair_index = static_cast<std::uint32_t>(pair);
    k.time_index = static_cast<std::uint32_t>(step);
    k.replica = config.replica;
    k.substream = sub;
    return k;
  }

  /// Pair level of subensemble block l when the run spans levels 0..L of the
  /// hierarchy; single-level runs place their one block at key level L.
  int block_level(std::size_t block) const {
    return ensemble.levels.size() == 1 ? config.level : static_cast<int>(block);
  }

  void initialize() {
    const Eigen::Index d = hierarchy.state_dim();
    ensemble.levels.resize(config.ensemble_sizes.size());
    stats.resize(config.ensemble_sizes.size());
    for (std::size_t l = 0; l < ensemble.levels.size(); ++l) {
      const int count = config.ensemble_sizes[l];
      if (count < 2) throw std::invalid_argument("ensemble sizes must be at least 2");
      LevelPair& pair = ensemble.levels[l];
      pair.fine.resize(d, count);
      for (Eigen::Index j = 0; j < count; ++j)
        pair.fine.col(j) = config.init.sample(config.seed, key(block_level(l), j, 0, Substream::init));
      if (l > 0) pair.coarse = pair.fine;  // coupled pairs start identical
    }
  }

  void evaluate_outputs(int step) {
    for (std::size_t l = 0; l < ensemble.levels.size(); ++l) {
      LevelPair& pair = ensemble.levels[l];
      const int pair_level = block_level(l);
      const Eigen::Index count = pair.fine.cols();
      stats[l].fine_particles = pair.fine;
      stats[l].fine_outputs.resize(hierarchy.output_dim(), count);
      parallel_for(count, config.threads, [&](Eigen::Index j) {
        stats[l].fine_outputs.col(j) =
            hierarchy.evaluate(pair.fine.col(j), pair_level, key(pair_level, j, step, Substream::model));
      });
      audit.record(pair_level, count);
      if (l > 0) {
        stats[l].coarse_particles = pair.coarse;
        stats[l].coarse_outputs.resize(hierarchy.output_dim(), count);
        parallel_for(count, config.threads, [&](Eigen::Index j) {
          stats[l].coarse_outputs.col(j) = hierarchy.evaluate(
              pair.coarse.col(j), pair_level - 1, key(pair_level, j, step, Substream::model));
        });
        audit.record(pair_level - 1, count);
      }
    }
  }

  double select_tau(int step) {
    const StepSchedule& schedule = method.step_schedule;
    switch (schedule.kind) {
      case StepSchedule::Kind::none:
        return 1.0;
      case StepSchedule::Kind::fixed:
        return fixed_tau_at(schedule, step);
      case StepSchedule::Kind::adaptive: {
        // Per-level step sizes; the whole ensemble advances with the minimum.
        const Eigen::VectorXd& y = method.observation_at(step);
        double tau = std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < stats.size(); ++l) {
          tau = std::min(tau, adaptive_tau(stats[l].fine_outputs, y, method.noise_cov,
                                           schedule.tau0, schedule.tau_max));
          if (l > 0)
            tau = std::min(tau, adaptive_tau(stats[l].coarse_outputs, y, method.noise_cov,
                                             schedule.tau0, schedule.tau_max));
        }
        return tau;
      }
    }
    throw std::logic_error("unknown schedule kind");
  }

  void update_particles(int step, const StatBundle& theta, double tau) {
    const PsiOperator psi(method, theta, method.observation_at(step), tau);
    for (std::size_t l = 0; l < ensemble.levels.size(); ++l) {
      LevelPair& pair = ensemble.levels[l];
      const int pair_level = block_level(l);
      const Eigen::Index count = pair.fine.cols();
      const bool has_coarse = l > 0;
      parallel_for(count, config.threads, [&](Eigen::Index j) {
        Eigen::VectorXd xi(0);
        if (noise_dim > 0)
          xi = NoiseStream(config.seed, key(pair_level, j, step, Substream::update)).normals(noise_dim);
        pair.fine.col(j) = psi.apply(pair.fine.col(j), stats[l].fine_outputs.col(j), xi);
        if (has_coarse)
          pair.coarse.col(j) = psi.apply(pair.coarse.col(j), stats[l].coarse_outputs.col(j), xi);
      });
    }
  }

  Eigen::VectorXd qoi() const {
    Eigen::VectorXd estimate = ensemble.levels[0].fine.rowwise().mean();
    for (std::size_t l = 1; l < ensemble.levels.size(); ++l)
      estimate += ensemble.levels[l].fine.rowwise().mean() -
                  ensemble.levels[l].coarse.rowwise().mean();
    return estimate;
  }

  RunResult run() {
    initialize();
    RunResult result;
    double sum_tau = 0.0;
    int step = 0;
    for (; step < config.num_steps; ++step) {
      try {
        evaluate_outputs(step);
        const StatBundle theta = ml_statistic(layout, stats);
        const double tau = select_tau(step);
        update_particles(step, theta, tau);
        sum_tau += tau;
        if (observer) observer(StepInfo{step, tau, theta, ensemble});
      } catch (const std::exception& e) {
        throw std::runtime_error("run aborted at step " + std::to_string(step) + ": " + e.what());
      }
      if (sum_tau >= config.horizon) {
        ++step;
        break;
      }
    }
    result.qoi = qoi();
    result.steps_taken = step;
    result.eval_counts = audit.counts;
    result.total_cost = audit.total(hierarchy);
    result.ensemble_sizes = config.ensemble_sizes;
    result.seed = config.seed;
    return result;
  }
};

}  // namespace

Eigen::VectorXd InitialLaw::sample(std::uint64_t seed, const NoiseKey& key) const {
  const NoiseStream stream(seed, key);
  return mean + sqrt_cov * stream.normals(mean.size());
}

RunResult run_single_level(const MethodSpec& method, const ModelHierarchy& hierarchy,
                           const RunConfig& config, const StepObserver& observer) {
  if (config.ensemble_sizes.size() != 1)
    throw std::invalid_argument("run_single_level: expected exactly one ensemble size");
  Driver driver(method, hierarchy, config, observer);
  return driver.run();
}

RunResult run_multilevel(const MethodSpec& method, const ModelHierarchy& hierarchy,
                         const RunConfig& config, const StepObserver& observer) {
  if (config.ensemble_sizes.size() != static_cast<std::size_t>(config.level) + 1)
    throw std::invalid_argument("run_multilevel: need one ensemble size per level 0..L");
  Driver driver(method, hierarchy, config, observer);
  return driver.run();
}

MlParams select_params_ml(double epsilon, double beta, double gamma, double j_const) {
  MlParams params;
  params.level = shared_level_count(epsilon, beta);
  const int levels = params.level;
  params.ensemble_sizes.resize(levels + 1);
  for (int l = 0; l <= levels; ++l) {
    double factor;
    if (beta > gamma) {
      factor = std::exp2(beta * levels);
    } else if (beta == gamma) {
      factor = static_cast<double>(levels) * levels * std::exp2(beta * levels);
    } else {
      factor = std::exp2((beta + 2.0 * gamma) * levels / 3.0);
    }
    const double raw = j_const * std::exp2(-(beta + 2.0 * gamma) * l / 3.0) * factor;
    params.ensemble_sizes[l] = static_cast<int>(std::max(2.0, ceil_guarded(raw)));
  }
  return params;
}

SlParams select_params_sl(double epsilon, double beta, double gamma, double j_const) {
  (void)gamma;
  SlParams params;
  params.level = shared_level_count(epsilon, beta);
  params.ensemble_size =
      static_cast<int>(std::max(2.0, ceil_guarded(j_const / (epsilon * epsilon))));
  return params;
}

int step_budget(double epsilon, const StepBudget& schedule) {
  if (schedule.kind == StepBudget::Kind::fixed) return schedule.fixed_steps;
  const double raw = schedule.n_const * std::pow(epsilon, -schedule.delta);
  return static_cast<int>(std::max(1.0, ceil_guarded(raw)));
}

}  // namespace mlek
