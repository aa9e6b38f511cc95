#pragma once

#include <functional>
#include <vector>

#include "moc2her/goal_envs.hpp"
#include "moc2her/rng.hpp"
#include "moc2her/transition.hpp"

namespace moc2her {

enum class GoalStrategy { final_state, future, episode };

struct HindsightConfig {
  int k0 = 4;
  int k_decay_interval = 0;  // 0: k stays at k0
  double c_r = 0.0;
  double delta_displacement = 1e-3;
  int disable_2her_at = -1;  // <0: never disabled
  GoalStrategy strategy = GoalStrategy::future;
  bool split_2her_sets = false;
};

using RewardFn =
    std::function<double(const VectorXd& achieved, const VectorXd& desired)>;

// k = max(0, k0 - floor(iteration / interval)); constant k0 without decay.
int k_schedule(int iteration, const HindsightConfig& cfg);

// Whether the second (object-substitution) objective is still emitted at this
// iteration: true before disable_2her_at, always true when the cutoff is
// negative (never disabled).
bool two_objective_active(int iteration, const HindsightConfig& cfg);

// Object tasks: accept iff the object moved strictly more than delta over the
// episode. Tasks without an object always pass.
bool displacement_filter(const Trajectory& traj, double delta,
                         const EnvDescriptor& desc);

// k indices uniform with replacement from {t+1, ..., T}; state s_j is the
// outcome of transition j-1.
std::vector<int> sample_future_indices(int t, int T, int k, Rng& rng);

// Strategy dispatch: final -> {T} repeated, future -> strictly later states,
// episode -> any state {1, ..., T}. final consumes no rng draws.
std::vector<int> sample_goal_indices(GoalStrategy strategy, int t, int T,
                                     int k, Rng& rng);

// Per transition t, draws k goal indices and emits one copy per sampled
// future achieved goal g': goal slices of both endpoint states become g',
// reward is recomputed against g'. Option, action, behavior_logp and the
// option bookkeeping are preserved.
std::vector<Transition> relabel_her(const Trajectory& traj,
                                    const HindsightConfig& cfg, int k,
                                    const RewardFn& reward_fn,
                                    const EnvDescriptor& desc, Rng& rng);

// HER goal relabel plus a second retrospective objective: a future agent
// position is written into the object slice of state_next (state_in keeps its
// original object position), and the reward becomes
// (1 - c_r) * r_goal + c_r * r_obj. Goal and object indices are drawn by two
// separate sampling calls per transition. Without an object this is exactly
// relabel_her, including rng consumption.
std::vector<Transition> relabel_2her(const Trajectory& traj,
                                     const HindsightConfig& cfg, int k,
                                     const RewardFn& reward_fn,
                                     const EnvDescriptor& desc, Rng& rng);

// Concatenates, shuffles uniformly, splits sequentially; the final smaller
// remainder is kept as its own minibatch.
std::vector<std::vector<Transition>> merge_shuffle_partition(
    std::vector<Transition> real, std::vector<Transition> relabeled,
    int minibatch_size, Rng& rng);

}  // namespace moc2her
