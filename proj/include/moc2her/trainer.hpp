#pragma once

#include <map>
#include <string>
#include <vector>

#include "moc2her/hindsight.hpp"
#include "moc2her/option_critic.hpp"

namespace moc2her {

// Fully resolved experiment description. Field names double as configuration
// file keys; see resolve_config for the layering order.
struct ExperimentConfig {
  std::string env = "point-reach";
  std::string algo = "moc";  // moc | oc
  std::string her = "none";  // none | her | 2her
  int n_options = 2;
  int n_iterations = 150;
  int steps_per_iteration = 500;
  int minibatch_size = 64;
  // Update passes over each iteration's data. One pass moves TD information
  // a single bootstrap hop per transition; short desk-scale runs need several
  // passes per iteration to cover the episode horizon.
  int epochs = 1;
  long seed = 0;
  double alpha = 1e-4;       // action-value head
  double alpha_zeta = 1e-4;  // per-option action policies
  double alpha_nu = 1e-4;    // termination head
  double alpha_z = 1e-4;     // option-selection head
  double gamma = 0.98;
  double entropy_coef = 0.0;
  double rho_max = 2.0;
  // Lower bound projected onto each option's log-deviation after every policy
  // update; keeps exploration alive when data is reused across epochs. -inf
  // disables the projection.
  double log_std_floor = -std::numeric_limits<double>::infinity();
  HindsightConfig hindsight;
  std::string out_dir = ".";

  bool single_option() const { return algo == "oc"; }
};

using KeyValues = std::map<std::string, std::string>;

// Flat `key = value` file; '#' lines and blank lines are skipped.
KeyValues parse_config_file(const std::string& path);

// Layering: struct defaults, then environment defaults, then file values,
// then command-line values. Throws with every violation listed at once.
ExperimentConfig resolve_config(const KeyValues& file_values,
                                const KeyValues& cli_values);

// Throws with all violations listed; run_experiment's startup gate.
void validate_config(const ExperimentConfig& cfg);

// Round-trippable `key = value` text of every effective field.
std::string serialize_config(const ExperimentConfig& cfg);

struct IterationMetrics {
  int iteration = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  long real_transitions = 0;
  long relabeled_transitions = 0;
  std::vector<double> option_usage;
};

// Fraction of episodes whose final achieved goal lies within the success
// radius of the desired goal. Rejects an empty list.
double success_rate(const std::vector<Trajectory>& trajectories);

// Per-option fraction of all logged timesteps; sums to 1 over options.
std::vector<double> option_usage(const std::vector<Trajectory>& trajectories,
                                 int n_options);

// Trailing mean over min(window, t+1) entries at each index t.
std::vector<double> moving_average(const std::vector<double>& series,
                                   int window = 20);

void write_metrics_csv(const std::vector<IterationMetrics>& rows,
                       const std::string& path);

void write_agent_params(const AgentParams& params, const std::string& path);

// Runs the full loop and writes metrics.csv, params.txt, and
// config.resolved.txt under cfg.out_dir. Deterministic in (config, seed).
std::vector<IterationMetrics> run_experiment(const ExperimentConfig& cfg);

}  // namespace moc2her
