#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "mlek/harness.hpp"

namespace {

int cmd_run(const std::string& config_path, int threads_override) {
  mlek::ExperimentConfig config = mlek::parse_config_file(config_path);
  if (threads_override > 0) config.threads = threads_override;

  std::cout << "problem " << mlek::to_string(config.problem) << ", "
            << mlek::to_string(config.algorithm) << ", " << config.epsilons.size()
            << " epsilon values, R=" << config.replications << "\n";

  const mlek::GoldStandard gold = mlek::load_or_compute_gold(config);
  std::cout << "gold standard " << gold.config_hash << " (std error " << gold.std_error << ")\n";

  const mlek::ConvergenceReport report = mlek::rmse_sweep(config, gold);
  for (const mlek::SweepRow& row : report.rows)
    std::cout << "  eps=" << row.epsilon << "  L=" << row.level << "  N=" << row.num_steps
              << "  cost=" << row.mean_cost << "  rmse=" << row.rmse << "\n";
  std::cout << "fitted slope " << report.fit.slope << " over last " << report.slope_window
            << " rows (residual " << report.fit.residual << ")\n";

  const std::filesystem::path out_dir(config.output_dir);
  mlek::save_run_rows(report, (out_dir / "rows.json").string());
  mlek::emit_report(report, (out_dir / "report.csv").string());
  std::cout << "wrote " << (out_dir / "report.csv").string() << "\n";
  return 0;
}

int cmd_gold(const std::string& problem, std::uint64_t seed, const std::string& config_path) {
  mlek::ExperimentConfig config =
      config_path.empty() ? mlek::ExperimentConfig{} : mlek::parse_config_file(config_path);
  if (!problem.empty()) config.problem = mlek::problem_from_string(problem);
  config.gold_seed = seed;

  const mlek::GoldStandard gold = mlek::load_or_compute_gold(config);
  std::cout << "gold " << gold.config_hash << " for " << mlek::to_string(config.problem)
            << " (seed " << seed << ")\n";
  std::cout << "qoi =";
  for (Eigen::Index i = 0; i < gold.qoi.size(); ++i) std::cout << " " << gold.qoi[i];
  std::cout << "\nstd error = " << gold.std_error << "\n";
  std::cout << "cached in " << mlek::gold_cache_dir() << "\n";
  return 0;
}

int cmd_report(const std::string& in_dir, const std::string& out_csv) {
  const std::filesystem::path rows_path = std::filesystem::path(in_dir) / "rows.json";
  const mlek::ConvergenceReport report = mlek::load_run_rows(rows_path.string());
  mlek::emit_report(report, out_csv);
  std::cout << "wrote " << out_csv << " (slope " << report.fit.slope << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multilevel ensemble Kalman experiment harness"};
  app.require_subcommand(1);

  std::string config_path;
  int threads = 0;
  CLI::App* run = app.add_subcommand("run", "run an RMSE-vs-cost sweep from a config file");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--threads", threads, "override the config's thread count");

  std::string gold_problem;
  std::uint64_t gold_seed = 0;
  std::string gold_config;
  CLI::App* gold = app.add_subcommand("gold", "compute (and cache) a gold-standard QoI");
  gold->add_option("--problem", gold_problem, "ou_denkf | ou_enkf | darcy_eki | darcy_eks");
  gold->add_option("--seed", gold_seed, "gold-standard seed")->required();
  gold->add_option("--config", gold_config, "optional config file for problem parameters");

  std::string report_in, report_out;
  CLI::App* report = app.add_subcommand("report", "regenerate a CSV report from cached run rows");
  report->add_option("--in", report_in, "directory containing rows.json")->required();
  report->add_option("--out", report_out, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, threads);
    if (gold->parsed()) return cmd_gold(gold_problem, gold_seed, gold_config);
    if (report->parsed()) return cmd_report(report_in, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
