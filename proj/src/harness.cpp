#include "mlek/harness.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mlek {

namespace {

using nlohmann::json;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

std::string canonical_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

int max_sweep_steps(const ExperimentConfig& config) {
  int steps = 0;
  for (double eps : config.epsilons) steps = std::max(steps, step_budget(eps, config.steps));
  return steps;
}

/// Level of the reference (gold/data) model: exact OU at level 0, or the
/// finest sweep level plus a safety boost for Darcy.
int reference_level(const ExperimentConfig& config) {
  if (config.problem == Problem::ou_denkf || config.problem == Problem::ou_enkf) return 0;
  const double eps_min = config.epsilons.empty() ? 0.0625 : config.epsilons.back();
  const MlParams p = select_params_ml(eps_min, 1.0, 0.5, 1.0);
  return p.level + config.darcy.gold_level_boost;
}

/// Step count of one gold run: filtering compares distributions at the fixed
/// assimilation horizon, the iterative inversions get their own generous
/// budget.
int gold_run_steps(const ExperimentConfig& config) {
  if (config.problem == Problem::ou_denkf || config.problem == Problem::ou_enkf)
    return config.steps.kind == StepBudget::Kind::fixed ? config.steps.fixed_steps
                                                        : config.ou.num_steps;
  return config.gold_steps;
}

}  // namespace

std::string to_string(Problem p) {
  switch (p) {
    case Problem::ou_denkf: return "ou_denkf";
    case Problem::ou_enkf: return "ou_enkf";
    case Problem::darcy_eki: return "darcy_eki";
    case Problem::darcy_eks: return "darcy_eks";
  }
  return "?";
}

std::string to_string(Algorithm a) {
  return a == Algorithm::single_level ? "single_level" : "multilevel";
}

Problem problem_from_string(const std::string& name) {
  if (name == "ou_denkf") return Problem::ou_denkf;
  if (name == "ou_enkf") return Problem::ou_enkf;
  if (name == "darcy_eki") return Problem::darcy_eki;
  if (name == "darcy_eks") return Problem::darcy_eks;
  throw std::invalid_argument("unknown problem: " + name);
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "single_level") return Algorithm::single_level;
  if (name == "multilevel") return Algorithm::multilevel;
  throw std::invalid_argument("unknown algorithm: " + name);
}

ProblemSetup make_problem(const ExperimentConfig& config) {
  ProblemSetup setup;
  const bool is_ou = config.problem == Problem::ou_denkf || config.problem == Problem::ou_enkf;

  if (is_ou) {
    setup.filtering = true;
    setup.hierarchy = std::make_shared<OuMilsteinHierarchy>(config.ou.sigma, config.base_seed);
    setup.gold_hierarchy = std::make_shared<OuExactModel>(config.ou.sigma, config.gold_seed);
    setup.gold_level = 0;
    setup.beta = setup.hierarchy->beta();
    setup.gamma = setup.hierarchy->gamma_rate();

    setup.method.kind =
        config.problem == Problem::ou_denkf ? MethodKind::denkf : MethodKind::enkf;
    setup.method.observation_map = Eigen::MatrixXd::Identity(1, 1);
    setup.method.noise_cov = config.ou.obs_noise_var * Eigen::MatrixXd::Identity(1, 1);

    // Synthetic data: truth follows the exact dynamics from u(0); one
    // observation per assimilation step, enough for the longest run.
    const int obs_count = std::max(config.ou.num_steps, max_sweep_steps(config));
    double truth = config.ou.init_mean;
    for (int n = 0; n < obs_count; ++n) {
      NoiseKey k{0, 0, static_cast<std::uint32_t>(n), 0, Substream::data};
      const NoiseStream stream(config.data_seed, k);
      truth = ou_exact_step(truth, config.ou.sigma, stream.normal(0));
      Eigen::VectorXd y(1);
      y[0] = truth + std::sqrt(config.ou.obs_noise_var) * stream.normal(1);
      setup.method.observations.push_back(y);
    }

    setup.init.mean = Eigen::VectorXd::Constant(1, config.ou.init_mean);
    setup.init.sqrt_cov = config.ou.init_std * Eigen::MatrixXd::Identity(1, 1);
    setup.method.step_schedule.kind = StepSchedule::Kind::none;
  } else {
    setup.filtering = false;
    DarcyParams grid;
    grid.grid_offset = config.darcy.grid_offset;
    grid.kl_tau = config.darcy.kl_tau;
    grid.num_modes = config.darcy.num_modes;
    auto darcy = std::make_shared<DarcyHierarchy>(grid);
    setup.hierarchy = darcy;
    setup.gold_hierarchy = darcy;  // deterministic model, same instance
    setup.gold_level = reference_level(config);
    setup.beta = darcy->beta();
    setup.gamma = darcy->gamma_rate();

    const int d_u = config.darcy.num_modes;
    const int d_g = darcy->output_dim();
    setup.method.kind = config.problem == Problem::darcy_eki ? MethodKind::eki : MethodKind::eks;
    setup.method.noise_cov = config.darcy.obs_noise_var * Eigen::MatrixXd::Identity(d_g, d_g);
    if (config.problem == Problem::darcy_eks)
      setup.method.prior_cov = Eigen::MatrixXd::Identity(d_u, d_u);

    // Synthetic data: a prior draw pushed through the reference model.
    const NoiseStream prior_stream(config.data_seed, {0, 0, 0, 0, Substream::data});
    const Eigen::VectorXd u_truth = prior_stream.normals(d_u);
    const Eigen::VectorXd g_truth =
        darcy->evaluate(u_truth, setup.gold_level, {0, 0, 0, 0, Substream::model});
    const NoiseStream obs_stream(config.data_seed, {0, 0, 1, 0, Substream::data});
    setup.method.observations.push_back(
        g_truth + std::sqrt(config.darcy.obs_noise_var) * obs_stream.normals(d_g));

    setup.init.mean = Eigen::VectorXd::Zero(d_u);
    setup.init.sqrt_cov = Eigen::MatrixXd::Identity(d_u, d_u);
    setup.method.step_schedule.kind = StepSchedule::Kind::adaptive;
    setup.method.step_schedule.tau0 = config.darcy.tau0;
    setup.method.step_schedule.tau_max = config.darcy.tau_max;
  }
  return setup;
}

double effective_j_const(const ExperimentConfig& config, const ProblemSetup& setup) {
  if (config.j_const > 0.0) return config.j_const;
  if (config.algorithm == Algorithm::single_level) return 1.0;
  const double eps_max = config.epsilons.empty() ? 0.5 : config.epsilons.front();
  const MlParams probe = select_params_ml(eps_max, setup.beta, setup.gamma, 1.0);
  const int levels = probe.level;
  double factor;
  if (setup.beta > setup.gamma) {
    factor = std::exp2(setup.beta * levels);
  } else if (setup.beta == setup.gamma) {
    factor = static_cast<double>(levels) * levels * std::exp2(setup.beta * levels);
  } else {
    factor = std::exp2((setup.beta + 2.0 * setup.gamma) * levels / 3.0);
  }
  factor *= std::exp2(-(setup.beta + 2.0 * setup.gamma) * levels / 3.0);
  if (factor <= 0.0) return 1.0;
  return 8.0 / factor;
}

std::string gold_cache_dir() {
  if (const char* dir = std::getenv("MLEK_CACHE_DIR")) return dir;
  return "mlek_cache";
}

std::string gold_config_hash(const ExperimentConfig& config) {
  std::ostringstream os;
  os << "v2|" << to_string(config.problem) << "|data=" << config.data_seed
     << "|gold=" << config.gold_seed << "|J=" << config.gold_particles
     << "|R=" << config.gold_replications << "|ref_level=" << reference_level(config);
  const bool is_ou = config.problem == Problem::ou_denkf || config.problem == Problem::ou_enkf;
  if (is_ou) {
    os << "|sigma=" << canonical_double(config.ou.sigma)
       << "|noise=" << canonical_double(config.ou.obs_noise_var)
       << "|init=" << canonical_double(config.ou.init_mean) << ","
       << canonical_double(config.ou.init_std) << "|N=" << gold_run_steps(config);
  } else {
    os << "|offset=" << config.darcy.grid_offset << "|tau=" << canonical_double(config.darcy.kl_tau)
       << "|modes=" << config.darcy.num_modes
       << "|noise=" << canonical_double(config.darcy.obs_noise_var)
       << "|tau0=" << canonical_double(config.darcy.tau0) << ","
       << canonical_double(config.darcy.tau_max) << "|N=" << gold_run_steps(config);
  }
  return hex64(fnv1a(os.str()));
}

GoldStandard compute_gold_standard(const ExperimentConfig& config) {
  const ProblemSetup setup = make_problem(config);
  const int steps = gold_run_steps(config);

  GoldStandard gold;
  gold.seed = config.gold_seed;
  gold.config_hash = gold_config_hash(config);
  gold.run_qois.resize(setup.hierarchy->state_dim(), config.gold_replications);
  for (int r = 0; r < config.gold_replications; ++r) {
    RunConfig rc;
    rc.level = setup.gold_level;
    rc.ensemble_sizes = {config.gold_particles};
    rc.num_steps = steps;
    rc.seed = config.gold_seed;
    rc.replica = static_cast<std::uint32_t>(r);
    rc.threads = config.threads;
    rc.init = setup.init;
    rc.horizon = config.horizon;
    gold.run_qois.col(r) = run_single_level(setup.method, *setup.gold_hierarchy, rc).qoi;
  }
  gold.qoi = gold.run_qois.rowwise().mean();
  if (config.gold_replications > 1) {
    const Eigen::MatrixXd centered = gold.run_qois.colwise() - gold.qoi;
    const Eigen::VectorXd var =
        centered.array().square().matrix().rowwise().sum() / (config.gold_replications - 1);
    gold.std_error = std::sqrt(var.sum() / config.gold_replications);
  }
  return gold;
}

GoldStandard load_or_compute_gold(const ExperimentConfig& config) {
  const std::string hash = gold_config_hash(config);
  const std::filesystem::path path =
      std::filesystem::path(gold_cache_dir()) / ("gold_" + hash + ".json");

  if (std::filesystem::exists(path)) {
    try {
      std::ifstream in(path);
      const json j = json::parse(in);
      if (j.at("hash").get<std::string>() != hash) throw std::runtime_error("hash mismatch");
      GoldStandard gold;
      gold.config_hash = hash;
      gold.seed = j.at("seed").get<std::uint64_t>();
      gold.std_error = j.at("std_error").get<double>();
      const auto qoi = j.at("qoi").get<std::vector<double>>();
      gold.qoi = Eigen::Map<const Eigen::VectorXd>(qoi.data(), static_cast<Eigen::Index>(qoi.size()));
      const auto runs = j.at("run_qois").get<std::vector<std::vector<double>>>();
      gold.run_qois.resize(gold.qoi.size(), static_cast<Eigen::Index>(runs.size()));
      for (std::size_t r = 0; r < runs.size(); ++r)
        gold.run_qois.col(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::VectorXd>(
            runs[r].data(), static_cast<Eigen::Index>(runs[r].size()));
      return gold;
    } catch (const std::exception& e) {
      std::cerr << "warning: gold cache " << path << " unusable (" << e.what()
                << "), recomputing\n";
    }
  }

  const GoldStandard gold = compute_gold_standard(config);
  std::filesystem::create_directories(path.parent_path());
  json j;
  j["hash"] = gold.config_hash;
  j["problem"] = to_string(config.problem);
  j["seed"] = gold.seed;
  j["std_error"] = gold.std_error;
  j["qoi"] = std::vector<double>(gold.qoi.data(), gold.qoi.data() + gold.qoi.size());
  std::vector<std::vector<double>> runs;
  for (Eigen::Index r = 0; r < gold.run_qois.cols(); ++r)
    runs.emplace_back(gold.run_qois.col(r).data(),
                      gold.run_qois.col(r).data() + gold.run_qois.rows());
  j["run_qois"] = runs;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  return gold;
}

double rmse_against(const std::vector<Eigen::VectorXd>& qois, const Eigen::VectorXd& gold) {
  if (qois.empty()) throw std::invalid_argument("rmse_against: no replications");
  double sum = 0.0;
  for (const Eigen::VectorXd& q : qois) sum += (q - gold).squaredNorm();
  return std::sqrt(sum / static_cast<double>(qois.size()));
}

ConvergenceReport rmse_sweep(const ExperimentConfig& config, const GoldStandard& gold) {
  if (config.replications < 2)
    throw std::invalid_argument("rmse_sweep: need at least 2 replications");
  for (std::size_t i = 1; i < config.epsilons.size(); ++i)
    if (!(config.epsilons[i] < config.epsilons[i - 1]))
      throw std::invalid_argument("rmse_sweep: epsilons must be strictly decreasing");

  const ProblemSetup setup = make_problem(config);
  const double j_const = effective_j_const(config, setup);

  ConvergenceReport report;
  report.gold_hash = gold.config_hash;
  report.gold_qoi = gold.qoi;
  report.slope_window = config.slope_window;
  {
    std::ostringstream os;
    os << to_string(config.problem) << "," << to_string(config.algorithm)
       << ",seed=" << config.base_seed << ",R=" << config.replications
       << ",j_const=" << canonical_double(j_const);
    report.config_id = os.str();
  }

  for (double eps : config.epsilons) {
    SweepRow row;
    row.epsilon = eps;
    row.num_steps = step_budget(eps, config.steps);
    if (config.algorithm == Algorithm::multilevel) {
      const MlParams p = select_params_ml(eps, setup.beta, setup.gamma, j_const);
      row.level = p.level;
      row.ensemble_sizes = p.ensemble_sizes;
    } else {
      const SlParams p = select_params_sl(eps, setup.beta, setup.gamma, j_const);
      row.level = p.level;
      row.ensemble_sizes = {p.ensemble_size};
    }

    for (int r = 0; r < config.replications; ++r) {
      RunConfig rc;
      rc.level = row.level;
      rc.ensemble_sizes = row.ensemble_sizes;
      rc.num_steps = row.num_steps;
      rc.seed = config.base_seed;
      rc.replica = static_cast<std::uint32_t>(r);
      rc.threads = config.threads;
      rc.init = setup.init;
      rc.horizon = config.horizon;
      const RunResult res = config.algorithm == Algorithm::multilevel
                                ? run_multilevel(setup.method, *setup.hierarchy, rc)
                                : run_single_level(setup.method, *setup.hierarchy, rc);
      row.rep_costs.push_back(res.total_cost);
      row.rep_qois.push_back(res.qoi);
    }
    double cost_sum = 0.0;
    for (double c : row.rep_costs) cost_sum += c;
    row.mean_cost = cost_sum / static_cast<double>(row.rep_costs.size());
    row.rmse = rmse_against(row.rep_qois, gold.qoi);
    report.rows.push_back(std::move(row));
  }

  if (report.rows.size() >= 2) {
    std::vector<double> costs, rmses;
    for (const SweepRow& row : report.rows) {
      costs.push_back(row.mean_cost);
      rmses.push_back(row.rmse);
    }
    report.fit = fit_rate(costs, rmses, std::min<int>(config.slope_window,
                                                      static_cast<int>(report.rows.size())));
  }
  return report;
}

}  // namespace mlek
