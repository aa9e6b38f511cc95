#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "moc2her/trainer.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Option-critic training with hindsight goal relabeling"};
  app.require_subcommand(1);

  CLI::App* train = app.add_subcommand("train", "Run one training experiment");
  std::string config_path;
  bool single_option = false;
  moc2her::KeyValues cli_kv;

  // Only explicitly passed flags enter the override map, so file values and
  // environment defaults survive unless the user actually typed a flag.
  auto add = [&](const std::string& flag, const std::string& key,
                 const std::string& help) {
    train->add_option(flag, help)->each([&cli_kv, key](const std::string& v) {
      cli_kv[key] = v;
    });
  };
  add("--env", "env", "Task id: point-reach or point-push");
  add("--algo", "algo", "moc (all options update) or oc (executed option only)");
  add("--her", "her", "Relabeling variant: none, her, or 2her");
  add("--options", "n_options", "Number of options");
  add("--iterations", "n_iterations", "Training iterations");
  add("--steps", "steps_per_iteration", "Environment steps per iteration");
  add("--seed", "seed", "Random seed");
  add("--out", "out_dir", "Output directory for metrics.csv and params.txt");
  add("--k", "k0", "Relabeled goals per transition");
  add("--k-decay", "k_decay_interval",
      "Iterations between decrements of k (0 disables decay)");
  add("--cr", "c_r", "Weight of the object-proximity term in relabeled rewards");
  add("--2her-disable", "disable_2her_at",
      "Iteration at which 2her relabeling reverts to plain her");
  add("--entropy", "entropy_coef", "Entropy bonus coefficient");
  add("--minibatch", "minibatch_size", "Minibatch size");
  add("--epochs", "epochs", "Update passes over each iteration's data");
  train->add_option("--lr", "Learning rate for all four parameter groups")
      ->each([&cli_kv](const std::string& v) {
        cli_kv["alpha"] = v;
        cli_kv["alpha_zeta"] = v;
        cli_kv["alpha_nu"] = v;
        cli_kv["alpha_z"] = v;
      });
  train->add_option("--config", config_path, "Flat key = value config file");
  train->add_flag("--single-option", single_option,
                  "Update only the executed option (same as --algo oc)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (single_option) cli_kv["algo"] = "oc";
    moc2her::KeyValues file_kv;
    if (!config_path.empty()) file_kv = moc2her::parse_config_file(config_path);

    const moc2her::ExperimentConfig cfg =
        moc2her::resolve_config(file_kv, cli_kv);
    const auto metrics = moc2her::run_experiment(cfg);
    std::cout << "wrote " << cfg.out_dir << "/metrics.csv (" << metrics.size()
              << " iterations)\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
