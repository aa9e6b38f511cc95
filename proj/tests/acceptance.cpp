// Release gate: one self-contained check per criterion, one PASS/FAIL line
// each. Training-based checks run full experiments through run_experiment;
// property checks drive the library against independent oracles. Exit code is
// the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "moc2her/contract.hpp"
#include "moc2her/goal_envs.hpp"
#include "moc2her/hindsight.hpp"
#include "moc2her/option_critic.hpp"
#include "moc2her/trainer.hpp"
#include "relabel_oracle.hpp"

using namespace moc2her;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared experiment plumbing for the training criteria.
// ---------------------------------------------------------------------------

const std::vector<long> kSeeds = {0, 1, 2, 3, 4};

fs::path scratch_root() {
  static const fs::path root =
      fs::temp_directory_path() / "moc2her_acceptance";
  fs::create_directories(root);
  return root;
}

// Hyperparameters shared by every training criterion. Values the release
// gate pins (env, options, iterations, steps) are set per criterion.
KeyValues flagship(const std::string& env, const std::string& algo,
                   const std::string& her, int options, int iterations,
                   long seed, const std::string& out_dir) {
  KeyValues kv;
  kv["env"] = env;
  kv["algo"] = algo;
  kv["her"] = her;
  kv["n_options"] = std::to_string(options);
  kv["n_iterations"] = std::to_string(iterations);
  kv["steps_per_iteration"] = "500";
  kv["seed"] = std::to_string(seed);
  kv["minibatch_size"] = "256";
  kv["epochs"] = "8";
  kv["gamma"] = "0.9";
  kv["alpha"] = "3e-3";
  kv["alpha_zeta"] = "3e-3";
  kv["alpha_nu"] = "1e-3";
  kv["alpha_z"] = "1e-3";
  kv["entropy_coef"] = "0.01";
  kv["log_std_floor"] = "-1.5";
  kv["out_dir"] = out_dir;
  return kv;
}

std::vector<IterationMetrics> run_arm(const KeyValues& overrides) {
  const ExperimentConfig cfg = resolve_config(KeyValues{}, overrides);
  return run_experiment(cfg);
}

double final20_success(const std::vector<IterationMetrics>& rows) {
  const int n = static_cast<int>(rows.size());
  const int w = std::min(20, n);
  double s = 0.0;
  for (int i = n - w; i < n; ++i) s += rows[i].success_rate;
  return s / w;
}

// ---------------------------------------------------------------------------
// Criterion 1: reward oracle.
// ---------------------------------------------------------------------------

Outcome criterion_reward_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101, 0);
  for (int i = 0; i < 100000; ++i) {
    const int dim = 1 + i % 4;
    VectorXd a(dim), b(dim);
    for (int d = 0; d < dim; ++d) {
      a[d] = rng.uniform(-2.0, 2.0);
      b[d] = rng.uniform(-2.0, 2.0);
    }
    const double eps = rng.uniform(0.0, 1.0);
    double sq = 0.0;
    for (int d = 0; d < dim; ++d) sq += (a[d] - b[d]) * (a[d] - b[d]);
    const double want = std::sqrt(sq) < eps ? 0.0 : -1.0;
    if (compute_sparse_reward(a, b, eps) != want)
      return {false, fmt("mismatch at draw %d", i)};
  }
  const double dt = seconds_since(t0);
  return {dt < 1.0, fmt("1e5 pairs exact, %.2f s (budget 1 s)", dt)};
}

// ---------------------------------------------------------------------------
// Criterion 2: occupancy rows sum to one.
// ---------------------------------------------------------------------------

Outcome criterion_occupancy() {
  const auto t0 = Clock::now();
  Rng rng(202, 0);
  double worst = 0.0;
  for (int n : {2, 4, 8}) {
    for (int i = 0; i < 1000; ++i) {
      AgentParams p = AgentParams::make(4, 2, n, rng);
      VectorXd s =
          VectorXd::NullaryExpr(4, [&](Eigen::Index) { return rng.normal(); });
      const int o_bar = rng.uniform_int(0, n - 1);
      double total = 0.0;
      for (int o = 0; o < n; ++o)
        total += option_transition_prob(p, o, s, o_bar);
      worst = std::max(worst, std::abs(total - 1.0));
    }
  }
  const double dt = seconds_since(t0);
  return {worst < 1e-9 && dt < 5.0,
          fmt("max |sum-1| = %.2e over 3000 draws, %.2f s (budget 5 s)", worst,
              dt)};
}

// ---------------------------------------------------------------------------
// Criterion 3: finite-difference gradient suite.
// ---------------------------------------------------------------------------

std::vector<Transition> synthetic_batch(int B, int n_options, Rng& rng) {
  std::vector<Transition> out(B);
  for (int i = 0; i < B; ++i) {
    Transition& t = out[i];
    t.state_in =
        VectorXd::NullaryExpr(4, [&](Eigen::Index) { return rng.normal(); });
    t.state_next =
        VectorXd::NullaryExpr(4, [&](Eigen::Index) { return rng.normal(); });
    t.action =
        VectorXd::NullaryExpr(2, [&](Eigen::Index) { return rng.normal(); });
    t.option = rng.uniform_int(0, n_options - 1);
    t.prev_option = rng.uniform_int(0, n_options - 1);
    t.next_option = rng.uniform_int(0, n_options - 1);
    t.reward = rng.uniform(-1.0, 0.0);
    t.behavior_logp = rng.uniform(-3.0, -0.5);
  }
  return out;
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  Rng rng(303, 0);
  double worst = 0.0;
  for (int draw = 0; draw < 50; ++draw) {
    AgentParams p = AgentParams::make(4, 2, 2, rng);
    const Batch b = Batch::from(synthetic_batch(6, 2, rng));

    {
      const EvalAux aux = compute_eval_aux(p, b, 0.9, 2.0, false);
      Mlp g = Mlp::zeros_like(p.q);
      evaluation_grad(p, b, aux, g);
      auto r = finite_diff_check([&] { return evaluation_loss(p, b, aux); },
                                 theta_views(p), views(g), 1e-4);
      if (!r.pass) return {false, fmt("evaluation draw %d", draw)};
      worst = std::max(worst, r.max_rel_err);
    }
    {
      const ImproveAux aux = compute_improve_aux(p, b, 0.9, 2.0, 0.01, false,
                                                 false);
      std::vector<Mlp> pg;
      std::vector<VectorXd> lg;
      for (int o = 0; o < 2; ++o) {
        pg.push_back(Mlp::zeros_like(p.pi[o]));
        lg.push_back(VectorXd::Zero(2));
      }
      improvement_grad(p, b, aux, pg, lg);
      std::vector<TensorView> analytic;
      for (auto& g : pg)
        for (auto v : views(g)) analytic.push_back(v);
      for (auto& g : lg) analytic.push_back(view(g));
      auto r = finite_diff_check([&] { return improvement_loss(p, b, aux); },
                                 zeta_views(p), analytic, 1e-4);
      if (!r.pass) return {false, fmt("improvement draw %d", draw)};
      worst = std::max(worst, r.max_rel_err);
    }
    {
      const TermAux aux = compute_term_aux(p, b);
      Mlp g = Mlp::zeros_like(p.beta);
      termination_grad(p, b, aux, g);
      auto r = finite_diff_check([&] { return termination_loss(p, b, aux); },
                                 nu_views(p), views(g), 1e-4);
      if (!r.pass) return {false, fmt("termination draw %d", draw)};
      worst = std::max(worst, r.max_rel_err);
    }
    {
      const MetaAux aux = compute_meta_aux(p, b);
      Mlp g = Mlp::zeros_like(p.mu);
      meta_grad(p, b, aux, g);
      auto r = finite_diff_check([&] { return meta_loss(p, b, aux); },
                                 z_views(p), views(g), 1e-4);
      if (!r.pass) return {false, fmt("meta draw %d", draw)};
      worst = std::max(worst, r.max_rel_err);
    }
    {
      VectorXd mean(2), log_std(2), a(2);
      for (int d = 0; d < 2; ++d) {
        mean[d] = rng.normal();
        log_std[d] = rng.uniform(-1.0, 0.5);
        a[d] = rng.normal();
      }
      GaussianLogProb g = gaussian_log_prob_grad(mean, log_std, a);
      auto r = finite_diff_check(
          [&] { return gaussian_log_prob(mean, log_std, a); },
          {view(mean), view(log_std)}, {view(g.dmean), view(g.dlog_std)},
          1e-4);
      if (!r.pass) return {false, fmt("gaussian logp draw %d", draw)};
      worst = std::max(worst, r.max_rel_err);
    }
  }
  const double dt = seconds_since(t0);
  return {dt < 60.0,
          fmt("5 losses x 50 draws, max rel err %.1e, %.1f s (budget 60 s)",
              worst, dt)};
}

// ---------------------------------------------------------------------------
// Criterion 4: relabelers match the exhaustive oracle.
// ---------------------------------------------------------------------------

Outcome criterion_relabel_oracle() {
  const auto t0 = Clock::now();
  long compared = 0;
  for (int T = 1; T <= 5; ++T) {
    for (int rep = 0; rep < 200; ++rep) {
      const std::uint64_t seed = 1000 * T + rep;
      {
        Rng build(seed, 7);
        const Trajectory traj = oracle::grid_reach_trajectory(T, build);
        HindsightConfig hc;
        hc.k0 = 3;
        const EnvDescriptor desc = oracle::reach_desc();
        const RewardFn fn = [&](const VectorXd& a, const VectorXd& d) {
          return compute_sparse_reward(a, d, desc.epsilon_reward);
        };
        Rng lib_rng(seed, 8), oracle_rng(seed, 8);
        const auto got = relabel_her(traj, hc, 3, fn, desc, lib_rng);
        const auto want = oracle::relabel_her(traj, 3, desc.epsilon_reward,
                                              desc, oracle_rng);
        if (got.size() != want.size())
          return {false, fmt("her count T=%d rep=%d", T, rep)};
        for (std::size_t i = 0; i < got.size(); ++i, ++compared)
          if (!oracle::transitions_identical(got[i], want[i]))
            return {false, fmt("her transition %zu T=%d rep=%d", i, T, rep)};
      }
      {
        Rng build(seed, 9);
        const Trajectory traj = oracle::grid_push_trajectory(T, build);
        HindsightConfig hc;
        hc.k0 = 3;
        hc.c_r = 0.8;
        const EnvDescriptor desc = oracle::push_desc();
        const RewardFn fn = [&](const VectorXd& a, const VectorXd& d) {
          return compute_sparse_reward(a, d, desc.epsilon_reward);
        };
        Rng lib_rng(seed, 10), oracle_rng(seed, 10);
        const auto got = relabel_2her(traj, hc, 3, fn, desc, lib_rng);
        const auto want = oracle::relabel_2her(traj, 3, desc.epsilon_reward,
                                               0.8, desc, oracle_rng);
        if (got.size() != want.size())
          return {false, fmt("2her count T=%d rep=%d", T, rep)};
        for (std::size_t i = 0; i < got.size(); ++i, ++compared)
          if (!oracle::transitions_identical(got[i], want[i]))
            return {false, fmt("2her transition %zu T=%d rep=%d", i, T, rep)};
      }
    }
  }
  const double dt = seconds_since(t0);
  return {dt < 60.0, fmt("%ld transitions identical, %.1f s (budget 60 s)",
                         compared, dt)};
}

// ---------------------------------------------------------------------------
// Criterion 5: schedules.
// ---------------------------------------------------------------------------

Outcome criterion_schedules() {
  const auto t0 = Clock::now();
  HindsightConfig hc;
  hc.k0 = 8;
  hc.k_decay_interval = 37;
  const std::vector<std::pair<int, int>> table = {
      {0, 8}, {36, 8}, {37, 7}, {73, 7}, {74, 6}, {295, 1}, {296, 0},
      {10000, 0}};
  for (auto [it, want] : table)
    if (k_schedule(it, hc) != want)
      return {false, fmt("k_schedule(%d) != %d", it, want)};

  hc.disable_2her_at = 15;
  for (int it = 0; it < 40; ++it)
    if (two_objective_active(it, hc) != (it < 15))
      return {false, fmt("cutoff wrong at iteration %d", it)};
  hc.disable_2her_at = -1;
  if (!two_objective_active(100000, hc))
    return {false, "negative cutoff must mean never disabled"};
  hc.disable_2her_at = 0;
  if (two_objective_active(0, hc))
    return {false, "cutoff 0 must disable from the first iteration"};
  const double dt = seconds_since(t0);
  return {dt < 1.0, fmt("k table and cutoff boundary exact, %.2f s", dt)};
}

// ---------------------------------------------------------------------------
// Criterion 6: goal relabeling lifts point-reach success.
// ---------------------------------------------------------------------------

Outcome criterion_reach_her_vs_plain() {
  const auto t0 = Clock::now();
  const fs::path root = scratch_root() / "reach";
  double her_sum = 0.0, plain_sum = 0.0;
  std::string per_seed;
  for (long seed : kSeeds) {
    const auto her_rows =
        run_arm(flagship("point-reach", "moc", "her", 2, 150, seed,
                         (root / ("her_" + std::to_string(seed))).string()));
    const auto plain_rows =
        run_arm(flagship("point-reach", "moc", "none", 2, 150, seed,
                         (root / ("plain_" + std::to_string(seed))).string()));
    const double h = final20_success(her_rows);
    const double p = final20_success(plain_rows);
    her_sum += h;
    plain_sum += p;
    per_seed += fmt(" s%ld:%.2f/%.2f", seed, h, p);
  }
  const double her_mean = her_sum / kSeeds.size();
  const double plain_mean = plain_sum / kSeeds.size();
  const double dt = seconds_since(t0);
  const bool pass = her_mean >= 0.90 && plain_mean <= 0.20 && dt <= 900.0;
  return {pass, fmt("relabeled %.3f (need >= 0.90), plain %.3f (need <= "
                    "0.20),%s, %.0f s (budget 900 s)",
                    her_mean, plain_mean, per_seed.c_str(), dt)};
}

// ---------------------------------------------------------------------------
// Criterion 7: second objective lifts point-push success.
// ---------------------------------------------------------------------------

Outcome criterion_push_2her_vs_her() {
  const auto t0 = Clock::now();
  const fs::path root = scratch_root() / "push";
  double two_sum = 0.0, one_sum = 0.0;
  std::string per_seed;
  for (long seed : kSeeds) {
    const auto two_rows =
        run_arm(flagship("point-push", "moc", "2her", 4, 400, seed,
                         (root / ("2her_" + std::to_string(seed))).string()));
    const auto one_rows =
        run_arm(flagship("point-push", "moc", "her", 4, 400, seed,
                         (root / ("her_" + std::to_string(seed))).string()));
    const double a = final20_success(two_rows);
    const double b = final20_success(one_rows);
    two_sum += a;
    one_sum += b;
    per_seed += fmt(" s%ld:%.2f/%.2f", seed, a, b);
  }
  const double two_mean = two_sum / kSeeds.size();
  const double one_mean = one_sum / kSeeds.size();
  const double dt = seconds_since(t0);
  const bool pass =
      two_mean >= 0.60 && two_mean - one_mean >= 0.30 && dt <= 2700.0;
  return {pass, fmt("two-objective %.3f (need >= 0.60), goal-only %.3f (need "
                    "margin >= 0.30),%s, %.0f s (budget 2700 s)",
                    two_mean, one_mean, per_seed.c_str(), dt)};
}

// ---------------------------------------------------------------------------
// Criterion 8: every option stays in use.
// ---------------------------------------------------------------------------

Outcome criterion_option_liveness() {
  const auto t0 = Clock::now();
  const fs::path root = scratch_root() / "liveness";
  std::string detail;
  bool pass = true;
  for (long seed : kSeeds) {
    const auto rows =
        run_arm(flagship("point-reach", "moc", "her", 4, 150, seed,
                         (root / ("s" + std::to_string(seed))).string()));
    const int n = static_cast<int>(rows.size());
    std::vector<double> usage(4, 0.0);
    for (int i = n - 20; i < n; ++i)
      for (int o = 0; o < 4; ++o) usage[o] += rows[i].option_usage[o] / 20;
    double lo = 1.0;
    for (double u : usage) lo = std::min(lo, u);
    pass = pass && lo > 0.0;
    detail += fmt(" s%ld:min_use=%.3f", seed, lo);
  }
  const double dt = seconds_since(t0);
  return {pass, fmt("4-option runs,%s, %.0f s", detail.c_str(), dt)};
}

// ---------------------------------------------------------------------------
// Criterion 9: byte-identical rerun.
// ---------------------------------------------------------------------------

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion_determinism() {
  const auto t0 = Clock::now();
  const fs::path root = scratch_root() / "determinism";
  const fs::path a = root / "a", b = root / "b";
  run_arm(flagship("point-reach", "moc", "her", 2, 150, kSeeds[0],
                   a.string()));
  run_arm(flagship("point-reach", "moc", "her", 2, 150, kSeeds[0],
                   b.string()));
  const std::string ba = file_bytes(a / "metrics.csv");
  const std::string bb = file_bytes(b / "metrics.csv");
  const double dt = seconds_since(t0);
  if (ba.empty()) return {false, "metrics.csv missing or empty"};
  return {ba == bb, fmt("metrics.csv rerun %s (%zu bytes), %.0f s",
                        ba == bb ? "byte-identical" : "DIFFERS", ba.size(),
                        dt)};
}

// ---------------------------------------------------------------------------
// Criterion 10: no-object reduction.
// ---------------------------------------------------------------------------

Outcome criterion_no_object_reduction() {
  const auto t0 = Clock::now();
  bool rejected = false;
  try {
    KeyValues kv;
    kv["env"] = "point-reach";
    kv["her"] = "2her";
    run_arm(kv);
  } catch (const ContractViolation&) {
    rejected = true;
  }
  if (!rejected)
    return {false, "2her on point-reach was not rejected at startup"};

  Rng build(77, 7);
  for (int T = 1; T <= 5; ++T) {
    const Trajectory traj = oracle::grid_reach_trajectory(T, build);
    const EnvDescriptor desc = oracle::reach_desc();
    HindsightConfig hc;
    hc.k0 = 4;
    hc.c_r = 0.8;
    const RewardFn fn = [&](const VectorXd& a, const VectorXd& d) {
      return compute_sparse_reward(a, d, desc.epsilon_reward);
    };
    Rng r1(55, 1), r2(55, 1);
    const auto via_2her = relabel_2her(traj, hc, 4, fn, desc, r1);
    const auto via_her = relabel_her(traj, hc, 4, fn, desc, r2);
    if (via_2her.size() != via_her.size())
      return {false, fmt("size differs at T=%d", T)};
    for (std::size_t i = 0; i < via_2her.size(); ++i)
      if (!oracle::transitions_identical(via_2her[i], via_her[i]))
        return {false, fmt("transition %zu differs at T=%d", i, T)};
    if (r1.next() != r2.next())
      return {false, fmt("rng stream diverged at T=%d", T)};
  }
  const double dt = seconds_since(t0);
  return {true,
          fmt("startup rejection and bitwise fallback hold, %.2f s", dt)};
}

}  // namespace

int main(int argc, char** argv) {
  struct Entry {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Entry> entries = {
      {1, "reward oracle", criterion_reward_oracle},
      {2, "occupancy normalization", criterion_occupancy},
      {3, "gradient finite differences", criterion_gradients},
      {4, "relabel oracle", criterion_relabel_oracle},
      {5, "schedules", criterion_schedules},
      {6, "reach: relabeling vs plain", criterion_reach_her_vs_plain},
      {7, "push: two objectives vs one", criterion_push_2her_vs_her},
      {8, "option liveness", criterion_option_liveness},
      {9, "determinism", criterion_determinism},
      {10, "no-object reduction", criterion_no_object_reduction},
  };

  // Optional filter: a comma-separated list of criterion ids.
  std::vector<bool> wanted(entries.size() + 1, true);
  if (argc > 1) {
    wanted.assign(entries.size() + 1, false);
    std::stringstream ss(argv[1]);
    std::string tok;
    while (std::getline(ss, tok, ','))
      wanted[std::stoul(tok)] = true;
  }

  int failed = 0;
  for (const auto& e : entries) {
    if (!wanted[e.id]) continue;
    Outcome o;
    try {
      o = e.run();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    if (!o.pass) ++failed;
    printf("criterion %2d %-30s %s  %s\n", e.id, e.name,
           o.pass ? "PASS" : "FAIL", o.detail.c_str());
    fflush(stdout);
  }
  return failed;
}
