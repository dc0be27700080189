#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mlek/harness.hpp"

namespace mlek {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + value + "'");
  }
  if (used != value.size())
    throw std::invalid_argument("config: bad number for " + key + ": '" + value + "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long v;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": '" + value + "'");
  }
  if (used != value.size())
    throw std::invalid_argument("config: bad integer for " + key + ": '" + value + "'");
  return v;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::istringstream is(value);
  std::string tok;
  while (is >> tok) out.push_back(parse_double(key, tok));
  if (out.empty()) throw std::invalid_argument("config: empty list for " + key);
  return out;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  std::map<std::string, std::string> entries;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(line_no) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    if (entries.count(full))
      throw std::invalid_argument("config: duplicate key " + full);
    entries[full] = value;
  }

  ExperimentConfig cfg;
  bool steps_set = false;

  const auto take = [&entries](const std::string& key) -> const std::string* {
    const auto it = entries.find(key);
    return it == entries.end() ? nullptr : &it->second;
  };

  if (const auto* v = take("problem")) cfg.problem = problem_from_string(*v);
  if (const auto* v = take("algorithm")) cfg.algorithm = algorithm_from_string(*v);
  if (const auto* v = take("output")) cfg.output_dir = *v;
  if (const auto* v = take("threads")) cfg.threads = static_cast<int>(parse_int("threads", *v));

  if (const auto* v = take("sweep.epsilons")) cfg.epsilons = parse_double_list("sweep.epsilons", *v);
  if (const auto* v = take("sweep.replications"))
    cfg.replications = static_cast<int>(parse_int("sweep.replications", *v));
  if (const auto* v = take("sweep.seed"))
    cfg.base_seed = static_cast<std::uint64_t>(parse_int("sweep.seed", *v));
  if (const auto* v = take("sweep.j_const")) cfg.j_const = parse_double("sweep.j_const", *v);
  if (const auto* v = take("sweep.slope_window"))
    cfg.slope_window = static_cast<int>(parse_int("sweep.slope_window", *v));

  if (const auto* v = take("steps.schedule")) {
    steps_set = true;
    if (*v == "fixed")
      cfg.steps.kind = StepBudget::Kind::fixed;
    else if (*v == "power")
      cfg.steps.kind = StepBudget::Kind::power_law;
    else
      throw std::invalid_argument("config: steps.schedule must be 'fixed' or 'power'");
  }
  if (const auto* v = take("steps.n")) {
    steps_set = true;
    cfg.steps.fixed_steps = static_cast<int>(parse_int("steps.n", *v));
  }
  if (const auto* v = take("steps.n_const")) {
    steps_set = true;
    cfg.steps.n_const = parse_double("steps.n_const", *v);
  }
  if (const auto* v = take("steps.delta")) {
    steps_set = true;
    cfg.steps.delta = parse_double("steps.delta", *v);
  }
  if (const auto* v = take("steps.horizon")) cfg.horizon = parse_double("steps.horizon", *v);

  if (const auto* v = take("ou.sigma")) cfg.ou.sigma = parse_double("ou.sigma", *v);
  if (const auto* v = take("ou.obs_noise_var"))
    cfg.ou.obs_noise_var = parse_double("ou.obs_noise_var", *v);
  if (const auto* v = take("ou.init_mean")) cfg.ou.init_mean = parse_double("ou.init_mean", *v);
  if (const auto* v = take("ou.init_std")) cfg.ou.init_std = parse_double("ou.init_std", *v);
  if (const auto* v = take("ou.num_steps"))
    cfg.ou.num_steps = static_cast<int>(parse_int("ou.num_steps", *v));

  if (const auto* v = take("darcy.grid_offset"))
    cfg.darcy.grid_offset = static_cast<int>(parse_int("darcy.grid_offset", *v));
  if (const auto* v = take("darcy.kl_tau")) cfg.darcy.kl_tau = parse_double("darcy.kl_tau", *v);
  if (const auto* v = take("darcy.num_modes"))
    cfg.darcy.num_modes = static_cast<int>(parse_int("darcy.num_modes", *v));
  if (const auto* v = take("darcy.obs_noise_var"))
    cfg.darcy.obs_noise_var = parse_double("darcy.obs_noise_var", *v);
  if (const auto* v = take("darcy.tau0")) cfg.darcy.tau0 = parse_double("darcy.tau0", *v);
  if (const auto* v = take("darcy.tau_max")) cfg.darcy.tau_max = parse_double("darcy.tau_max", *v);
  if (const auto* v = take("darcy.gold_level_boost"))
    cfg.darcy.gold_level_boost = static_cast<int>(parse_int("darcy.gold_level_boost", *v));

  if (const auto* v = take("gold.seed"))
    cfg.gold_seed = static_cast<std::uint64_t>(parse_int("gold.seed", *v));
  if (const auto* v = take("gold.replications"))
    cfg.gold_replications = static_cast<int>(parse_int("gold.replications", *v));
  if (const auto* v = take("gold.particles"))
    cfg.gold_particles = static_cast<int>(parse_int("gold.particles", *v));
  if (const auto* v = take("gold.steps"))
    cfg.gold_steps = static_cast<int>(parse_int("gold.steps", *v));

  if (const auto* v = take("data.seed"))
    cfg.data_seed = static_cast<std::uint64_t>(parse_int("data.seed", *v));

  static const char* known[] = {
      "problem", "algorithm", "output", "threads",
      "sweep.epsilons", "sweep.replications", "sweep.seed", "sweep.j_const", "sweep.slope_window",
      "steps.schedule", "steps.n", "steps.n_const", "steps.delta", "steps.horizon",
      "ou.sigma", "ou.obs_noise_var", "ou.init_mean", "ou.init_std", "ou.num_steps",
      "darcy.grid_offset", "darcy.kl_tau", "darcy.num_modes", "darcy.obs_noise_var",
      "darcy.tau0", "darcy.tau_max", "darcy.gold_level_boost",
      "gold.seed", "gold.replications", "gold.particles", "gold.steps",
      "data.seed"};
  for (const auto& [key, value] : entries) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw std::invalid_argument("config: unknown key " + key);
  }

  // Problem-dependent step-budget default: fixed-N filtering, the
  // conservative power law for the iterative inversions.
  if (!steps_set) {
    if (cfg.problem == Problem::ou_denkf || cfg.problem == Problem::ou_enkf) {
      cfg.steps.kind = StepBudget::Kind::fixed;
      cfg.steps.fixed_steps = cfg.ou.num_steps;
    } else {
      cfg.steps.kind = StepBudget::Kind::power_law;
      cfg.steps.n_const = 50.0;
      cfg.steps.delta = 0.1;
    }
  }

  if (cfg.replications < 2) throw std::invalid_argument("config: replications must be >= 2");
  for (std::size_t i = 0; i < cfg.epsilons.size(); ++i) {
    if (!(cfg.epsilons[i] > 0.0 && cfg.epsilons[i] < 1.0))
      throw std::invalid_argument("config: epsilons must lie in (0, 1)");
    if (i > 0 && !(cfg.epsilons[i] < cfg.epsilons[i - 1]))
      throw std::invalid_argument("config: epsilons must be strictly decreasing");
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config_text(os.str());
}

}  // namespace mlek
