#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mlek/harness.hpp"

namespace mlek {

namespace {
using nlohmann::json;
}

RateFit fit_rate(const std::vector<double>& costs, const std::vector<double>& rmses, int window) {
  if (costs.size() != rmses.size()) throw std::invalid_argument("fit_rate: size mismatch");
  if (costs.size() < 2) throw std::invalid_argument("fit_rate: need at least 2 rows");
  if (window < 2 || static_cast<std::size_t>(window) > costs.size())
    throw std::invalid_argument("fit_rate: bad window");

  const std::size_t begin = costs.size() - static_cast<std::size_t>(window);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = begin; i < costs.size(); ++i) {
    if (!(costs[i] > 0.0) || !(rmses[i] > 0.0))
      throw std::invalid_argument("fit_rate: costs and RMSE values must be positive");
    const double x = std::log2(costs[i]);
    const double y = std::log2(rmses[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(window);
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("fit_rate: degenerate abscissae");

  RateFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss = 0;
  for (std::size_t i = begin; i < costs.size(); ++i) {
    const double r = std::log2(rmses[i]) - (fit.slope * std::log2(costs[i]) + fit.intercept);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

std::string format_significant(double value, int digits) {
  if (value == 0.0) return "0";
  if (!std::isfinite(value)) throw std::invalid_argument("format_significant: non-finite value");
  const int exp10 = static_cast<int>(std::floor(std::log10(std::abs(value))));
  const int decimals = std::max(0, digits - 1 - exp10);
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

void emit_report(const ConvergenceReport& report, const std::string& csv_path) {
  const std::filesystem::path csv(csv_path);
  if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());

  std::ofstream out(csv);
  if (!out) throw std::runtime_error("emit_report: cannot write " + csv_path);
  out << "epsilon,cost,rmse,slope_window\n";
  const std::size_t window_begin =
      report.rows.size() >= static_cast<std::size_t>(report.slope_window)
          ? report.rows.size() - static_cast<std::size_t>(report.slope_window)
          : 0;
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const SweepRow& row = report.rows[i];
    out << format_significant(row.epsilon) << "," << format_significant(row.mean_cost) << ","
        << format_significant(row.rmse) << "," << (i >= window_begin ? 1 : 0) << "\n";
  }
  out.close();
  if (!out) throw std::runtime_error("emit_report: write failed for " + csv_path);

  json meta;
  meta["config"] = report.config_id;
  meta["gold_hash"] = report.gold_hash;
  meta["gold_qoi"] = std::vector<double>(report.gold_qoi.data(),
                                         report.gold_qoi.data() + report.gold_qoi.size());
  meta["slope"] = report.fit.slope;
  meta["intercept"] = report.fit.intercept;
  meta["residual"] = report.fit.residual;
  meta["slope_window"] = report.slope_window;
  json rows = json::array();
  for (const SweepRow& row : report.rows) {
    json r;
    r["epsilon"] = row.epsilon;
    r["cost"] = row.mean_cost;
    r["rmse"] = row.rmse;
    r["level"] = row.level;
    r["ensemble_sizes"] = row.ensemble_sizes;
    r["num_steps"] = row.num_steps;
    rows.push_back(r);
  }
  meta["rows"] = rows;

  std::filesystem::path side(csv);
  side.replace_extension(".json");
  std::ofstream meta_out(side);
  if (!meta_out) throw std::runtime_error("emit_report: cannot write " + side.string());
  meta_out << meta.dump(2) << "\n";
}

std::vector<CsvRow> read_report_csv(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("read_report_csv: cannot open " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_report_csv: empty file");
  if (line != "epsilon,cost,rmse,slope_window")
    throw std::runtime_error("read_report_csv: unexpected header: " + line);
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    CsvRow row{};
    double* const targets[3] = {&row.epsilon, &row.cost, &row.rmse};
    for (double* t : targets) {
      if (!std::getline(ls, field, ',')) throw std::runtime_error("read_report_csv: short row");
      *t = std::stod(field);
    }
    if (!std::getline(ls, field, ',')) throw std::runtime_error("read_report_csv: short row");
    row.slope_window = std::stoi(field);
    rows.push_back(row);
  }
  return rows;
}

void save_run_rows(const ConvergenceReport& report, const std::string& path) {
  json j;
  j["config"] = report.config_id;
  j["gold_hash"] = report.gold_hash;
  j["gold_qoi"] = std::vector<double>(report.gold_qoi.data(),
                                      report.gold_qoi.data() + report.gold_qoi.size());
  j["slope_window"] = report.slope_window;
  json rows = json::array();
  for (const SweepRow& row : report.rows) {
    json r;
    r["epsilon"] = row.epsilon;
    r["level"] = row.level;
    r["ensemble_sizes"] = row.ensemble_sizes;
    r["num_steps"] = row.num_steps;
    r["rep_costs"] = row.rep_costs;
    json qois = json::array();
    for (const Eigen::VectorXd& q : row.rep_qois)
      qois.push_back(std::vector<double>(q.data(), q.data() + q.size()));
    r["rep_qois"] = qois;
    rows.push_back(r);
  }
  j["rows"] = rows;

  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("save_run_rows: cannot write " + path);
  out << j.dump(2) << "\n";
}

ConvergenceReport load_run_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_run_rows: cannot open " + path);
  const json j = json::parse(in);

  ConvergenceReport report;
  report.config_id = j.at("config").get<std::string>();
  report.gold_hash = j.at("gold_hash").get<std::string>();
  const auto gold = j.at("gold_qoi").get<std::vector<double>>();
  report.gold_qoi =
      Eigen::Map<const Eigen::VectorXd>(gold.data(), static_cast<Eigen::Index>(gold.size()));
  report.slope_window = j.at("slope_window").get<int>();
  for (const json& r : j.at("rows")) {
    SweepRow row;
    row.epsilon = r.at("epsilon").get<double>();
    row.level = r.at("level").get<int>();
    row.ensemble_sizes = r.at("ensemble_sizes").get<std::vector<int>>();
    row.num_steps = r.at("num_steps").get<int>();
    row.rep_costs = r.at("rep_costs").get<std::vector<double>>();
    for (const json& q : r.at("rep_qois")) {
      const auto values = q.get<std::vector<double>>();
      row.rep_qois.emplace_back(
          Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
    }
    report.rows.push_back(std::move(row));
  }
  return regenerate_report(std::move(report));
}

ConvergenceReport regenerate_report(ConvergenceReport report) {
  std::vector<double> costs, rmses;
  for (SweepRow& row : report.rows) {
    double sum = 0.0;
    for (double c : row.rep_costs) sum += c;
    row.mean_cost = sum / static_cast<double>(row.rep_costs.size());
    row.rmse = rmse_against(row.rep_qois, report.gold_qoi);
    costs.push_back(row.mean_cost);
    rmses.push_back(row.rmse);
  }
  if (report.rows.size() >= 2)
    report.fit = fit_rate(costs, rmses,
                          std::min<int>(report.slope_window, static_cast<int>(report.rows.size())));
  return report;
}

}  // namespace mlek
