#include "moc2her/trainer.hpp"

#include <cctype>
#include <charconv>
#include <climits>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "moc2her/contract.hpp"

namespace moc2her {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool parse_long(const std::string& s, long& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_int(const std::string& s, int& out) {
  long v = 0;
  if (!parse_long(s, v)) return false;
  if (v < INT_MIN || v > INT_MAX) return false;
  out = static_cast<int>(v);
  return true;
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t idx = 0;
    out = std::stod(s, &idx);
    return idx == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1") return out = true, true;
  if (s == "false" || s == "0") return out = false, true;
  return false;
}

bool parse_strategy(const std::string& s, GoalStrategy& out) {
  if (s == "final_state") return out = GoalStrategy::final_state, true;
  if (s == "future") return out = GoalStrategy::future, true;
  if (s == "episode") return out = GoalStrategy::episode, true;
  return false;
}

const char* strategy_name(GoalStrategy s) {
  switch (s) {
    case GoalStrategy::final_state: return "final_state";
    case GoalStrategy::future: return "future";
    case GoalStrategy::episode: return "episode";
  }
  return "future";
}

void apply_env_defaults(ExperimentConfig& cfg) {
  if (cfg.env == "point-reach") {
    cfg.hindsight.k0 = 4;
    cfg.hindsight.k_decay_interval = 0;
    cfg.hindsight.c_r = 0.0;
    cfg.entropy_coef = 0.0;
  } else if (cfg.env == "point-push") {
    cfg.hindsight.k0 = 8;
    cfg.hindsight.k_decay_interval = 37;
    cfg.hindsight.c_r = 0.8;
    cfg.entropy_coef = 0.005;
  }
}

// Applies one key; returns an error description or empty on success.
std::string apply_one(ExperimentConfig& cfg, const std::string& key,
                      const std::string& value) {
  auto bad = [&](const char* kind) {
    return "key '" + key + "': cannot parse '" + value + "' as " + kind;
  };
  if (key == "env") return cfg.env = value, "";
  if (key == "algo") return cfg.algo = value, "";
  if (key == "her") return cfg.her = value, "";
  if (key == "out_dir") return cfg.out_dir = value, "";
  if (key == "n_options")
    return parse_int(value, cfg.n_options) ? "" : bad("integer");
  if (key == "n_iterations")
    return parse_int(value, cfg.n_iterations) ? "" : bad("integer");
  if (key == "steps_per_iteration")
    return parse_int(value, cfg.steps_per_iteration) ? "" : bad("integer");
  if (key == "minibatch_size")
    return parse_int(value, cfg.minibatch_size) ? "" : bad("integer");
  if (key == "epochs") return parse_int(value, cfg.epochs) ? "" : bad("integer");
  if (key == "seed") return parse_long(value, cfg.seed) ? "" : bad("integer");
  if (key == "alpha") return parse_double(value, cfg.alpha) ? "" : bad("number");
  if (key == "alpha_zeta")
    return parse_double(value, cfg.alpha_zeta) ? "" : bad("number");
  if (key == "alpha_nu")
    return parse_double(value, cfg.alpha_nu) ? "" : bad("number");
  if (key == "alpha_z")
    return parse_double(value, cfg.alpha_z) ? "" : bad("number");
  if (key == "gamma") return parse_double(value, cfg.gamma) ? "" : bad("number");
  if (key == "entropy_coef")
    return parse_double(value, cfg.entropy_coef) ? "" : bad("number");
  if (key == "rho_max")
    return parse_double(value, cfg.rho_max) ? "" : bad("number");
  if (key == "log_std_floor")
    return parse_double(value, cfg.log_std_floor) ? "" : bad("number");
  if (key == "k0")
    return parse_int(value, cfg.hindsight.k0) ? "" : bad("integer");
  if (key == "k_decay_interval")
    return parse_int(value, cfg.hindsight.k_decay_interval) ? "" : bad("integer");
  if (key == "c_r")
    return parse_double(value, cfg.hindsight.c_r) ? "" : bad("number");
  if (key == "delta_displacement")
    return parse_double(value, cfg.hindsight.delta_displacement) ? ""
                                                                 : bad("number");
  if (key == "disable_2her_at")
    return parse_int(value, cfg.hindsight.disable_2her_at) ? "" : bad("integer");
  if (key == "strategy")
    return parse_strategy(value, cfg.hindsight.strategy)
               ? ""
               : bad("strategy (final_state|future|episode)");
  if (key == "split_2her_sets")
    return parse_bool(value, cfg.hindsight.split_2her_sets) ? "" : bad("boolean");
  return "unknown configuration key '" + key + "'";
}

std::vector<std::string> apply_all(ExperimentConfig& cfg, const KeyValues& kv) {
  std::vector<std::string> problems;
  for (const auto& [key, value] : kv) {
    std::string err = apply_one(cfg, key, value);
    if (!err.empty()) problems.push_back(std::move(err));
  }
  return problems;
}

std::vector<std::string> config_violations(const ExperimentConfig& cfg) {
  std::vector<std::string> v;
  const bool known_env = cfg.env == "point-reach" || cfg.env == "point-push";
  if (!known_env)
    v.push_back("env must be point-reach or point-push (got '" + cfg.env + "')");
  if (cfg.algo != "moc" && cfg.algo != "oc")
    v.push_back("algo must be moc or oc (got '" + cfg.algo + "')");
  if (cfg.her != "none" && cfg.her != "her" && cfg.her != "2her")
    v.push_back("her must be none, her, or 2her (got '" + cfg.her + "')");
  if (cfg.n_options < 1) v.push_back("n_options must be >= 1");
  if (cfg.n_iterations < 1) v.push_back("n_iterations must be >= 1");
  if (cfg.minibatch_size < 1) v.push_back("minibatch_size must be >= 1");
  if (cfg.epochs < 1) v.push_back("epochs must be >= 1");
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0))
    v.push_back("gamma must lie in [0, 1)");
  if (!(cfg.rho_max > 0.0)) v.push_back("rho_max must be positive");
  if (!(cfg.alpha > 0.0)) v.push_back("alpha must be positive");
  if (!(cfg.alpha_zeta > 0.0)) v.push_back("alpha_zeta must be positive");
  if (!(cfg.alpha_nu > 0.0)) v.push_back("alpha_nu must be positive");
  if (!(cfg.alpha_z > 0.0)) v.push_back("alpha_z must be positive");
  if (cfg.entropy_coef < 0.0) v.push_back("entropy_coef must be >= 0");
  if (std::isnan(cfg.log_std_floor) ||
      cfg.log_std_floor == std::numeric_limits<double>::infinity())
    v.push_back("log_std_floor must be finite or -inf");
  if (cfg.hindsight.k0 < 0) v.push_back("k0 must be >= 0");
  if (!(cfg.hindsight.c_r >= 0.0 && cfg.hindsight.c_r <= 1.0))
    v.push_back("c_r must lie in [0, 1]");
  if (cfg.hindsight.delta_displacement < 0.0)
    v.push_back("delta_displacement must be >= 0");
  if (known_env) {
    Rng probe(0, 0);
    const EnvDescriptor desc = make_env(cfg.env, probe)->descriptor();
    if (cfg.steps_per_iteration < 1 ||
        cfg.steps_per_iteration % desc.horizon != 0)
      v.push_back("steps_per_iteration must be a positive multiple of " +
                  std::to_string(desc.horizon));
    if (cfg.her == "2her" && !desc.has_object)
      v.push_back("her=2her requires an environment with an object ('" +
                  cfg.env + "' has none)");
  }
  return v;
}

void throw_if_invalid(const std::vector<std::string>& problems) {
  if (problems.empty()) return;
  std::string msg = "invalid configuration: ";
  for (std::size_t i = 0; i < problems.size(); ++i) {
    if (i) msg += "; ";
    msg += problems[i];
  }
  throw ContractViolation(msg);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_output(const std::string& path, const char* what) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error(std::string("cannot write ") + what + ": " + path);
  return os;
}

}  // namespace

KeyValues parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  KeyValues kv;
  std::vector<std::string> problems;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      problems.push_back("config line " + std::to_string(lineno) +
                         " is not 'key = value': " + t);
      continue;
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      problems.push_back("config line " + std::to_string(lineno) +
                         " has an empty key");
      continue;
    }
    kv[key] = value;  // later duplicates win
  }
  throw_if_invalid(problems);
  return kv;
}

ExperimentConfig resolve_config(const KeyValues& file_values,
                                const KeyValues& cli_values) {
  ExperimentConfig cfg;
  // The environment decides secondary defaults, so it resolves first.
  if (auto it = file_values.find("env"); it != file_values.end())
    cfg.env = it->second;
  if (auto it = cli_values.find("env"); it != cli_values.end())
    cfg.env = it->second;
  apply_env_defaults(cfg);

  std::vector<std::string> problems = apply_all(cfg, file_values);
  for (auto& p : apply_all(cfg, cli_values)) problems.push_back(std::move(p));

  // The 2her cutoff scales with run length unless pinned explicitly.
  const bool cutoff_given =
      file_values.count("disable_2her_at") || cli_values.count("disable_2her_at");
  if (cfg.her == "2her" && !cutoff_given && cfg.n_iterations >= 1)
    cfg.hindsight.disable_2her_at =
        static_cast<int>((150L * cfg.n_iterations + 1499) / 1500);

  for (auto& p : config_violations(cfg)) problems.push_back(std::move(p));
  throw_if_invalid(problems);
  return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
  throw_if_invalid(config_violations(cfg));
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "env = " << cfg.env << "\n";
  os << "algo = " << cfg.algo << "\n";
  os << "her = " << cfg.her << "\n";
  os << "n_options = " << cfg.n_options << "\n";
  os << "n_iterations = " << cfg.n_iterations << "\n";
  os << "steps_per_iteration = " << cfg.steps_per_iteration << "\n";
  os << "minibatch_size = " << cfg.minibatch_size << "\n";
  os << "epochs = " << cfg.epochs << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "alpha = " << format_double(cfg.alpha) << "\n";
  os << "alpha_zeta = " << format_double(cfg.alpha_zeta) << "\n";
  os << "alpha_nu = " << format_double(cfg.alpha_nu) << "\n";
  os << "alpha_z = " << format_double(cfg.alpha_z) << "\n";
  os << "gamma = " << format_double(cfg.gamma) << "\n";
  os << "entropy_coef = " << format_double(cfg.entropy_coef) << "\n";
  os << "rho_max = " << format_double(cfg.rho_max) << "\n";
  os << "log_std_floor = " << format_double(cfg.log_std_floor) << "\n";
  os << "k0 = " << cfg.hindsight.k0 << "\n";
  os << "k_decay_interval = " << cfg.hindsight.k_decay_interval << "\n";
  os << "c_r = " << format_double(cfg.hindsight.c_r) << "\n";
  os << "delta_displacement = " << format_double(cfg.hindsight.delta_displacement)
     << "\n";
  os << "disable_2her_at = " << cfg.hindsight.disable_2her_at << "\n";
  os << "strategy = " << strategy_name(cfg.hindsight.strategy) << "\n";
  os << "split_2her_sets = "
     << (cfg.hindsight.split_2her_sets ? "true" : "false") << "\n";
  os << "out_dir = " << cfg.out_dir << "\n";
  return os.str();
}

double success_rate(const std::vector<Trajectory>& trajectories) {
  require(!trajectories.empty(), "success_rate: no trajectories");
  long hits = 0;
  for (const auto& t : trajectories) hits += t.success ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(trajectories.size());
}

std::vector<double> option_usage(const std::vector<Trajectory>& trajectories,
                                 int n_options) {
  require(!trajectories.empty(), "option_usage: no trajectories");
  require(n_options >= 1, "option_usage: n_options < 1");
  std::vector<long> counts(static_cast<std::size_t>(n_options), 0);
  long total = 0;
  for (const auto& traj : trajectories)
    for (const auto& step : traj.steps) {
      require(step.option >= 0 && step.option < n_options,
              "option_usage: option index out of range");
      counts[static_cast<std::size_t>(step.option)]++;
      total++;
    }
  require(total > 0, "option_usage: no steps");
  std::vector<double> usage(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    usage[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  return usage;
}

std::vector<double> moving_average(const std::vector<double>& series,
                                   int window) {
  require(window >= 1, "moving_average: window < 1");
  std::vector<double> out(series.size());
  double running = 0.0;
  for (std::size_t t = 0; t < series.size(); ++t) {
    running += series[t];
    if (t >= static_cast<std::size_t>(window))
      running -= series[t - static_cast<std::size_t>(window)];
    const std::size_t n = std::min<std::size_t>(window, t + 1);
    out[t] = running / static_cast<double>(n);
  }
  return out;
}

void write_metrics_csv(const std::vector<IterationMetrics>& rows,
                       const std::string& path) {
  const std::size_t n_options = rows.empty() ? 0 : rows.front().option_usage.size();
  for (const auto& r : rows)
    require(r.option_usage.size() == n_options,
            "write_metrics_csv: rows disagree on option count");
  std::ofstream os = open_output(path, "metrics file");
  os << "iteration,success_rate,mean_return,real_transitions,relabeled_transitions";
  for (std::size_t o = 0; o < n_options; ++o) os << ",opt_usage_" << o;
  os << "\n";
  char buf[64];
  for (const auto& r : rows) {
    os << r.iteration;
    std::snprintf(buf, sizeof(buf), ",%.6f", r.success_rate);
    os << buf;
    std::snprintf(buf, sizeof(buf), ",%.6f", r.mean_return);
    os << buf;
    os << "," << r.real_transitions << "," << r.relabeled_transitions;
    for (double u : r.option_usage) {
      std::snprintf(buf, sizeof(buf), ",%.6f", u);
      os << buf;
    }
    os << "\n";
  }
  if (!os) throw std::runtime_error("cannot write metrics file: " + path);
}

void write_agent_params(const AgentParams& params, const std::string& path) {
  std::ofstream os = open_output(path, "parameter file");
  write_params_header(os);
  auto dump = [&os](const std::string& prefix, const Mlp& net) {
    write_tensor(os, prefix + ".hidden.w", net.hidden.w);
    write_tensor(os, prefix + ".hidden.b", net.hidden.b);
    write_tensor(os, prefix + ".out.w", net.out.w);
    write_tensor(os, prefix + ".out.b", net.out.b);
  };
  dump("mu", params.mu);
  dump("beta", params.beta);
  dump("q", params.q);
  for (int o = 0; o < params.n_options; ++o) {
    dump("pi." + std::to_string(o), params.pi[static_cast<std::size_t>(o)]);
    write_tensor(os, "log_std." + std::to_string(o),
                 params.log_std[static_cast<std::size_t>(o)]);
  }
  if (!os) throw std::runtime_error("cannot write parameter file: " + path);
}

std::vector<IterationMetrics> run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);

  // One dedicated stream per stochastic role keeps every stage reproducible
  // independently of the others.
  Rng init_rng(cfg.seed, 0);
  Rng env_rng(cfg.seed, 1);
  Rng collect_rng(cfg.seed, 2);
  Rng relabel_rng(cfg.seed, 3);
  Rng shuffle_rng(cfg.seed, 4);
  Rng construction_rng(cfg.seed, 5);

  auto env = make_env(cfg.env, construction_rng);
  const EnvDescriptor desc = env->descriptor();
  const int input_dim = desc.state_dim + desc.goal_dim;
  AgentParams params =
      AgentParams::make(input_dim, desc.action_dim, cfg.n_options, init_rng);
  AgentOptimizers opt = AgentOptimizers::make(params);
  const RewardFn reward_fn = [eps = desc.epsilon_reward](const VectorXd& a,
                                                         const VectorXd& d) {
    return compute_sparse_reward(a, d, eps);
  };

  std::vector<IterationMetrics> metrics;
  metrics.reserve(static_cast<std::size_t>(cfg.n_iterations));
  for (int iter = 0; iter < cfg.n_iterations; ++iter) {
    const int k = k_schedule(iter, cfg.hindsight);
    std::vector<Trajectory> trajs = collect_iteration(
        params, *env, env_rng, collect_rng, cfg.steps_per_iteration);

    IterationMetrics row;
    row.iteration = iter;
    row.success_rate = success_rate(trajs);
    double ret = 0.0;
    for (const auto& t : trajs) ret += t.episode_return;
    row.mean_return = ret / static_cast<double>(trajs.size());
    row.option_usage = option_usage(trajs, cfg.n_options);

    std::vector<Transition> real;
    real.reserve(static_cast<std::size_t>(cfg.steps_per_iteration));
    std::vector<Transition> relabeled;
    const bool emit_2her = two_objective_active(iter, cfg.hindsight);
    for (auto& traj : trajs) {
      if (cfg.her != "none" && k > 0 &&
          displacement_filter(traj, cfg.hindsight.delta_displacement, desc)) {
        std::vector<Transition> extra =
            (cfg.her == "2her" && emit_2her)
                ? relabel_2her(traj, cfg.hindsight, k, reward_fn, desc,
                               relabel_rng)
                : relabel_her(traj, cfg.hindsight, k, reward_fn, desc,
                              relabel_rng);
        relabeled.insert(relabeled.end(),
                         std::make_move_iterator(extra.begin()),
                         std::make_move_iterator(extra.end()));
      }
      real.insert(real.end(), std::make_move_iterator(traj.steps.begin()),
                  std::make_move_iterator(traj.steps.end()));
    }
    row.real_transitions = static_cast<long>(real.size());
    row.relabeled_transitions = static_cast<long>(relabeled.size());

    std::vector<Transition> pool = std::move(real);
    pool.insert(pool.end(), std::make_move_iterator(relabeled.begin()),
                std::make_move_iterator(relabeled.end()));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::vector<std::vector<Transition>> batches = merge_shuffle_partition(
          pool, {}, cfg.minibatch_size, shuffle_rng);
      for (const auto& batch : batches) {
        evaluation_step(params, opt, batch, cfg.gamma, cfg.alpha, cfg.rho_max,
                        cfg.single_option());
        improvement_step(params, opt, batch, cfg.gamma, cfg.alpha_zeta,
                         cfg.entropy_coef, cfg.rho_max, cfg.single_option(),
                         /*raw_q_advantage=*/false, cfg.log_std_floor);
        termination_update(params, opt, batch, cfg.alpha_nu);
        meta_policy_update(params, opt, batch, cfg.alpha_z);
      }
    }
    metrics.push_back(std::move(row));
  }

  std::filesystem::create_directories(cfg.out_dir);
  write_metrics_csv(metrics, cfg.out_dir + "/metrics.csv");
  write_agent_params(params, cfg.out_dir + "/params.txt");
  open_output(cfg.out_dir + "/config.resolved.txt", "resolved config")
      << serialize_config(cfg);
  return metrics;
}

}  // namespace moc2her
